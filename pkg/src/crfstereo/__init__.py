"""Hybrid CNN+CRF stereo matching.

Convolutional networks learn per-pixel matching costs and edge weights; a
4-connected CRF with a truncated label-jump penalty fuses them, solved by
dual decomposition into horizontal and vertical chains. The whole model
trains end to end with a structured max-margin objective.
"""

from .cnn import ConvLayer, conv2d_backward, conv2d_forward, network_backward, network_forward
from .correlation import CostVolume, argmax_decision, correlate, correlate_backward, unary_costs
from .crf import (
    ChainProblem,
    CrfProblem,
    certificate,
    chain_min_marginals,
    decode,
    decompose,
    dual_bound,
    dual_mm_step,
    energy,
    run_inference,
)
from .evaluate import EvalReport, badx, colorize, rms, sublabel_refine
from .io import GroundTruth, StereoSample, normalize_image, read_pfm, read_pgm, synth_random_dot, write_pfm, write_pgm
from .kernels import BACKEND
from .model import ModelParams, infer_disparity, init_params, load_checkpoint, save_checkpoint
from .pairwise import EdgeWeights, PenaltyParams, contrast_weights, pairwise_cnn_forward, rho
from .training import (
    TrainConfig,
    cross_entropy,
    hinge_upper_bound,
    loss_augment,
    sgd_momentum,
    ssvm_pairwise_subgradient,
    ssvm_unary_subgradient,
    train_joint,
    train_unary,
    truncated_loss,
)

__version__ = "0.1.0"
