"""Exception types raised across the library.

Every error condition that callers are expected to branch on gets its own
class; anything else surfaces as a plain ValueError.
"""


class ArtigraphError(Exception):
    """Base class for all library errors."""


# geometry
class BehindCamera(ArtigraphError):
    """Point has non-positive depth in the camera frame."""


class InvalidDepth(ArtigraphError):
    """Depth value is zero, negative, or non-finite."""


class EmptySequence(ArtigraphError):
    """Operation requires a non-empty sequence."""


# scene graph
class EmptyPointCloud(ArtigraphError):
    """Object nodes require a non-empty point set."""


class UnknownParent(ArtigraphError):
    """Referenced parent object node does not exist."""


class UnknownElement(ArtigraphError):
    """Referenced element node does not exist."""


class TrajectoryTooShort(ArtigraphError):
    """Articulation attachment needs a trajectory of length >= 2."""


class DimensionMismatch(ArtigraphError):
    """Feature vector dimension differs from the graph header."""


class ParseError(ArtigraphError):
    """Malformed serialized input; message carries the location."""


# view selection
class ZeroWeightSum(ArtigraphError):
    """Feature aggregation weights sum to zero."""


# element lifting
class AllNoise(ArtigraphError):
    """Clustering marked every point as noise."""


class NoVisiblePoints(ArtigraphError):
    """No object point projects validly into the frame."""


# tracking
class TooFewPoints(ArtigraphError):
    """PnP needs at least 4 correspondences."""


class DegenerateConfiguration(ArtigraphError):
    """Correspondence geometry leaves the pose unconstrained."""


class NoConvergence(ArtigraphError):
    """Iterative solver failed to reach a usable solution."""


class NonMonotonicTimestamps(ArtigraphError):
    """Trajectory timestamps must be strictly increasing."""


class InsufficientTrack(ArtigraphError):
    """Fewer than 2 frames produced a usable pose."""


# articulation fitting
class DegenerateTrajectory(ArtigraphError):
    """All trajectory points coincide; no line direction exists."""


class CollinearPoints(ArtigraphError):
    """Circle fit is underdetermined for collinear points."""


# graph refinement
class EmptyTrajectory(ArtigraphError):
    """Demonstration trajectory has no poses."""


class EmptyGraph(ArtigraphError):
    """Graph has no object nodes to parent a new element."""


# benchmark / metrics
class LengthMismatch(ArtigraphError):
    """Trajectories could not be aligned sample-for-sample."""


class JointTypeMismatch(ArtigraphError):
    """Metric requires both axes to be revolute."""


class InvalidConfig(ArtigraphError):
    """Configuration value out of range or unknown key."""
