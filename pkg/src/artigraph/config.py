"""Pipeline configuration: every tunable with its default, JSON-loadable.

Unknown keys are rejected by name so config typos fail fast.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from .errors import InvalidConfig
from .lifting import ClusterParams
from .tracking import FilterConfig


@dataclass
class PipelineConfig:
    top_k: int = 5
    depth_tol: float = 0.03  # m
    object_cluster: ClusterParams = field(default_factory=lambda: ClusterParams(0.05, 20))
    element_cluster: ClusterParams = field(default_factory=lambda: ClusterParams(0.02, 10))
    crop_expansion: float = 0.2
    association_threshold: float = 0.10  # m
    split_eps: float = 0.15  # m
    min_detection_score: float = 0.3
    filter: FilterConfig = field(default_factory=FilterConfig)
    lambda_penalty: float | None = None  # None -> ln(n)
    feature_dim: int = 512
    parent_by_min_point_distance: bool = False

    def validate(self):
        if self.top_k < 1:
            raise InvalidConfig("top_k must be >= 1")
        for key in ("depth_tol", "association_threshold", "split_eps"):
            if getattr(self, key) <= 0:
                raise InvalidConfig(f"{key} must be positive")
        if self.crop_expansion < 0:
            raise InvalidConfig("crop_expansion must be >= 0")
        if not 0.0 <= self.min_detection_score <= 1.0:
            raise InvalidConfig("min_detection_score must be in [0, 1]")
        if self.feature_dim < 1:
            raise InvalidConfig("feature_dim must be >= 1")
        if self.lambda_penalty is not None and self.lambda_penalty < 0:
            raise InvalidConfig("lambda_penalty must be >= 0")
        f = self.filter
        if f.alpha < 0 or min(f.sigma_meas_pos, f.sigma_meas_rot, f.sigma_acc, f.sigma_ang_acc) <= 0:
            raise InvalidConfig("filter noise parameters must be positive (alpha >= 0)")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(raw: dict) -> "PipelineConfig":
        if not isinstance(raw, dict):
            raise InvalidConfig("config must be a JSON object")

        def build(cls, data, where):
            allowed = {f.name for f in fields(cls)}
            unknown = set(data) - allowed
            if unknown:
                raise InvalidConfig(f"unknown config key{'s' if len(unknown) > 1 else ''} "
                                    f"{sorted(unknown)} in {where}")
            return data

        data = dict(build(PipelineConfig, raw, "config"))
        if "object_cluster" in data:
            data["object_cluster"] = ClusterParams(**build(ClusterParams, data["object_cluster"], "object_cluster"))
        if "element_cluster" in data:
            data["element_cluster"] = ClusterParams(**build(ClusterParams, data["element_cluster"], "element_cluster"))
        if "filter" in data:
            data["filter"] = FilterConfig(**build(FilterConfig, data["filter"], "filter"))
        try:
            cfg = PipelineConfig(**data)
        except (TypeError, ValueError) as e:
            raise InvalidConfig(str(e)) from e
        cfg.validate()
        return cfg
