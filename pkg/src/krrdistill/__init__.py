"""Kernel ridge regression dataset distillation with random Fourier features.

Construct provably small distilled datasets, evaluate the associated
error bounds, and optimize distilled sets with Adam. See the cli module
for the experiment harness.
"""

from .data import LabeledData
from .distill import DistilledSet, bound_vs_labels, bound_vs_optimal
from .kernel import KernelSpec
from .krr import BoundReport, KrrModel
from .optdistill import OptConfig, OptTrace
from .rff import FeatureMap, RffRidgeModel

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "DistilledSet",
    "FeatureMap",
    "KernelSpec",
    "KrrModel",
    "LabeledData",
    "OptConfig",
    "OptTrace",
    "RffRidgeModel",
    "bound_vs_labels",
    "bound_vs_optimal",
    "__version__",
]
