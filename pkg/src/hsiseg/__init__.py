"""Pixel-level hyperspectral image segmentation.

The pipeline encodes each pixel's spectrum to a short binary word with a
binarizing convolutional autoencoder, labels pixels with the hidden layer of
a restricted Boltzmann machine (trained by CD-1 or by any Boltzmann sampler
acting on the model's QUBO form), optionally merges the resulting label
clusters by agglomerative hierarchical clustering, and scores segmentations
with information-theoretic and pair-counting metrics.

Subpackages of note:

- hsi_data: ENVI cube I/O, masking, scaling, shuffled splits
- lbae: the binarizing 1D-convolutional autoencoder
- rbm: the RBM, its trainers, and pixel labeling
- samplers: exact, Gibbs, and simulated-annealing Boltzmann samplers
- remote: HTTP client for an external annealer plus a stub server
- clustering: agglomerative merging and the k-means baseline
- metrics: homogeneity, completeness, V-measure, Rand scores
- cli: the `hsiseg` command
"""

__version__ = "0.1.0"

from .clustering import DistanceMatrix, ahc, kmeans, pairwise_distances
from .hsi_data import HyperCube, PixelDataset, SplitDataset, load_envi
from .lbae import Decoder, Encoder, decode, encode, train_lbae
from .metrics import (
    adjusted_rand,
    completeness,
    contingency,
    homogeneity,
    rand_score,
    v_measure,
)
from .rbm import RbmModel, RbmTrainConfig, init_rbm, label_pixel, train_rbm
from .samplers import (
    QuboProblem,
    SampleSet,
    exact_boltzmann,
    gibbs_sample,
    rbm_to_qubo,
    sa_sample,
)

__all__ = [
    "__version__",
    "DistanceMatrix",
    "ahc",
    "kmeans",
    "pairwise_distances",
    "HyperCube",
    "PixelDataset",
    "SplitDataset",
    "load_envi",
    "Decoder",
    "Encoder",
    "decode",
    "encode",
    "train_lbae",
    "adjusted_rand",
    "completeness",
    "contingency",
    "homogeneity",
    "rand_score",
    "v_measure",
    "RbmModel",
    "RbmTrainConfig",
    "init_rbm",
    "label_pixel",
    "train_rbm",
    "QuboProblem",
    "SampleSet",
    "exact_boltzmann",
    "gibbs_sample",
    "rbm_to_qubo",
    "sa_sample",
]
