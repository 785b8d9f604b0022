"""Exception types shared across the package."""


class BeastForgeError(Exception):
    """Base class for all package errors."""


# -- skeleton graph -----------------------------------------------------------

class EmptySkeleton(BeastForgeError):
    """The skeleton has no bones."""


class DegenerateGeometry(BeastForgeError):
    """Joint positions carry no usable spatial extent."""


class ClassificationAmbiguous(BeastForgeError):
    """Two or more branches tie for the head region; reported, not guessed."""


# -- assembly planning --------------------------------------------------------

class PlanRejected(BeastForgeError):
    """A plan failed validation. ``violations`` lists every failed check."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "plan rejected")


class DisconnectedResult(BeastForgeError):
    """Executing a plan left the merged skeleton graph disconnected."""


# -- weight chain -------------------------------------------------------------

class UnmappedJoint(BeastForgeError):
    """A partition joint has no corresponding skinning column."""


class EmptyMesh(BeastForgeError):
    """The mesh has no vertices to transfer weights from."""


# -- voxel composition --------------------------------------------------------

class OutOfBounds(BeastForgeError):
    """A transform pushed most of a region outside the canonical cube."""


class AllZeroWeights(BeastForgeError):
    """Every weight in an overlap merge is zero."""


# -- external backends --------------------------------------------------------

class BackendUnavailable(BeastForgeError):
    """A remote backend could not be reached or timed out."""


class MalformedResponse(BeastForgeError):
    """A backend response failed schema validation."""


class StructureViolation(BeastForgeError):
    """A feature backend returned a different voxel position set than requested."""


# -- file formats -------------------------------------------------------------

class FormatError(BeastForgeError):
    """A serialized artifact is malformed."""
