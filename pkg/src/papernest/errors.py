"""Exception types shared across the pipeline."""


class PapernestError(Exception):
    """Base class for all papernest errors."""


class ParseError(PapernestError):
    """A mesh file could not be parsed."""


class TopologyError(PapernestError):
    """A mesh violates a topological requirement (open, non-manifold, ...)."""


class DegenerateError(PapernestError):
    """Geometry is degenerate (zero extent, zero volume, ...)."""


class BudgetError(PapernestError):
    """Decimation could not reach the requested face budget."""


class ApproximationError(PapernestError):
    """Papermesh construction failed after all retries."""


class NestingConflictError(PapernestError):
    """Containment relations between meshes are contradictory."""


class ContainmentError(PapernestError):
    """An inner mesh is not contained in its supposed outer mesh."""


class StitchError(PapernestError):
    """Boundary loops of a cut could not be paired or stitched."""


class DomainError(PapernestError):
    """A numeric argument is outside its valid domain."""


class SimulationDivergence(PapernestError):
    """The rigid-body simulation blew up (velocity limit exceeded)."""


class NoStableCutError(PapernestError):
    """All ranked cut directions were exhausted without a stable assembly."""


class ModeError(PapernestError):
    """A projection mode cannot be applied to this papermesh."""


class AnnealFailure(PapernestError):
    """Annealing exhausted its budget without an overlap-free unfolding."""


class ScaleError(PapernestError):
    """No legible print scale exists for the given patches and paper size."""


class ConfigError(PapernestError):
    """The run configuration is invalid."""


class StageError(PapernestError):
    """A pipeline stage failed; carries the stage name and the original error."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
