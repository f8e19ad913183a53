"""Medical image matting with probabilistic masks and entropy uncertainty maps."""

__version__ = "0.1.0"

from medmatting.core import (
    AlphaMatte,
    BinaryMask,
    Image,
    Trimap,
    TrimapLabel,
    UncertaintyField,
    alpha_entropy,
)

__all__ = [
    "AlphaMatte",
    "BinaryMask",
    "Image",
    "Trimap",
    "TrimapLabel",
    "UncertaintyField",
    "alpha_entropy",
    "__version__",
]
