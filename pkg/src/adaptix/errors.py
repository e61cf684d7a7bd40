"""Exception types shared across the package."""


class MeshStructureError(ValueError):
    """Raised for structurally invalid mesh input (bad ids, malformed files)."""


class InvertedElementError(ValueError):
    """Raised when an operation requiring positive element area receives an
    inverted or degenerate triangle."""


class ColouringError(RuntimeError):
    """Raised when speculative colouring fails to converge (never observed on
    planar meshes; hard round cap exceeded)."""


class AdaptationError(RuntimeError):
    """Raised when a checked adaptation run leaves the mesh non-conforming;
    carries the name of the offending kernel phase."""
