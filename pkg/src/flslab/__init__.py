"""Feature-learning strength lab: two-layer ReLU gradient flow on a Gaussian mixture.

Submodules: :mod:`mixture` (data and geometry), :mod:`network` (model and
initialisation), :mod:`flow` (integration and characteristic times),
:mod:`cones` (neuron partitions and alignment), :mod:`bounds` (closed-form
bounds and the error split), :mod:`sweep` (experiment grids) and :mod:`cli`.
"""

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402

__all__ = ["BACKEND", "__version__"]
