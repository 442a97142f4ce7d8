"""flowrec: flow geometry, velocity and wall shear stress from voxel image data."""

from ._kernels import HAVE_COMPILED, IMPLEMENTATION

__version__ = "0.1.0"

__all__ = ["HAVE_COMPILED", "IMPLEMENTATION", "__version__"]
