"""docgeo: a desk-scale laboratory for geometric document image rectification.

The package covers the full loop: synthesizing distorted document photos
with exact backward-warp ground truth, auto-annotating textlines, training
a hybrid CNN/transformer rectifier with 3D-shape and textline supervision,
rectifying by dense backward warping, and scoring results (MS-SSIM, local
distortion, OCR edit distance).

Neural modules (`segmenter`, `network`, `train`) import torch and are kept
out of this namespace so that the numpy-only geometry/metrics layers stay
cheap to import.
"""

__version__ = "0.1.0"

from .geometry import (
    WarpField,
    apply_flow,
    coords_to_flow,
    flow_to_coords,
    identity_coords,
    identity_flow,
    invert_map,
    map_points_through_flow,
)
from .annotate import Textline

__all__ = [
    "WarpField",
    "apply_flow",
    "coords_to_flow",
    "flow_to_coords",
    "identity_coords",
    "identity_flow",
    "invert_map",
    "map_points_through_flow",
    "Textline",
    "__version__",
]
