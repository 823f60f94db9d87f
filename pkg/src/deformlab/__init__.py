"""deformlab: measure how convolutional networks respond to smooth image deformations.

The package bundles three things: a parametric random-deformation generator
(control grids densified with thin plate splines, applied by bilinear
warping), a small self-contained CNN training engine with interchangeable
downsampling layers, and the two measurement instruments built on top of
them: normalized cosine distance sensitivity profiles and normalized total
variation filter smoothness. The harness subpackage orchestrates seeded
multi-run experiments around these pieces.
"""

__version__ = "0.1.0"

from deformlab.deform import (
    ControlDisplacements,
    DeformationField,
    DeformationSpec,
    affine_to_displacements,
    deform_image,
    make_control_grid,
    sample_control_displacements,
    tps_at_points,
    tps_densify,
    warp,
)
from deformlab.metrics import (
    SensitivityProfile,
    SmoothnessReport,
    baseline_init_ntv,
    cosine_distance,
    ncd_from_representations,
    normalized_total_variation,
    sensitivity_profile,
    smoothness_profile,
)
from deformlab.nn import (
    Network,
    gradient_check,
    init_network,
    smooth_filters,
    train_sgd,
)
from deformlab.data import (
    LabeledDataset,
    load_cifar10,
    load_mnist,
    make_template_task,
    randomize_labels,
)

__all__ = [
    "__version__",
    "ControlDisplacements",
    "DeformationField",
    "DeformationSpec",
    "affine_to_displacements",
    "deform_image",
    "make_control_grid",
    "sample_control_displacements",
    "tps_at_points",
    "tps_densify",
    "warp",
    "SensitivityProfile",
    "SmoothnessReport",
    "baseline_init_ntv",
    "cosine_distance",
    "ncd_from_representations",
    "normalized_total_variation",
    "sensitivity_profile",
    "smoothness_profile",
    "Network",
    "gradient_check",
    "init_network",
    "smooth_filters",
    "train_sgd",
    "LabeledDataset",
    "load_cifar10",
    "load_mnist",
    "make_template_task",
    "randomize_labels",
]
