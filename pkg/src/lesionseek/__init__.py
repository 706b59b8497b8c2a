"""lesionseek: attribute-grounded content-based retrieval of lesion images."""

__version__ = "0.1.0"

from lesionseek.core import (
    ATTRIBUTE_NAMES,
    AttributeVector,
    DatasetSplit,
    LesionImage,
    attribute_from_index,
    attribute_index,
)
from lesionseek.oracle import compute_attributes, mask_geometry

__all__ = [
    "ATTRIBUTE_NAMES",
    "AttributeVector",
    "DatasetSplit",
    "LesionImage",
    "attribute_from_index",
    "attribute_index",
    "compute_attributes",
    "mask_geometry",
    "__version__",
]
