"""Exception types shared across the solver."""


class SWEError(Exception):
    """Base class for solver errors."""


class DryStateError(SWEError, ValueError):
    """A flux or boundary closure was asked to operate on a dry state it
    cannot handle (e.g. the Roe linearization)."""


class MeshError(SWEError, ValueError):
    """Invalid mesh construction request."""


class BoundaryDataError(SWEError, ValueError):
    """Boundary specification is inconsistent with its regime."""


class InitializationError(SWEError, RuntimeError):
    """The coarse-to-fine initialization sweep failed to reach its tolerance."""


class AssemblyError(SWEError, RuntimeError):
    """Linear system assembly produced an unusable (singular) operator."""
