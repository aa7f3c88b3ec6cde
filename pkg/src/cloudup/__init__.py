"""Magnification-flexible point cloud upsampling.

One trained model upsamples any cloud by any integer factor R in
[2, rmax]: a weight head scores every (point, neighbor, replica) triple
and factor R simply reads the first R replica channels, so all factors
share one parameter set. See the README for the full pipeline.
"""

from .core import DenseCloud, NeighborIndex, PatchSet, SparseCloud, \
    extract_patches, farthest_point_sample, knn, merge_patches, \
    normalize_unit_sphere
from .errors import CloudUpError, ConfigError, ContractError, \
    DegenerateCloudError, RangeError, ShapeError, XYZParseError
from .losses import LossWeights, UniformLossConfig, chamfer, \
    projection_loss, total_loss, uniform_loss
from .metrics import MetricReport, evaluate, metric_cd, metric_hd, \
    metric_jsd, metric_nuc, metric_p2f
from .network import NetConfig, UpsampleResult, init_params, upsample_patch
from .surfaces import GaussianBump, Plane, Sphere, Torus, parse_surface, \
    sample_surface
from .synth import TrainingPair, add_noise, augment, make_pair
from .train import TrainConfig, evaluate_cd, patch_loss

__version__ = "0.1.0"
