"""Sparse signal recovery from quantized linear measurements with GEC-SR."""
from .denoisers import (
    GaussianMessage,
    PosteriorMoments,
    extrinsic,
    prior_denoise,
    quantized_denoise,
)
from .engine import DivergedError, GecConfig, GecState, gec_sr_run, mse
from .linear import LinearPosterior, linear_estimate
from .model import (
    BernoulliGaussianPrior,
    ProblemInstance,
    Quantizer,
    SensingMatrix,
    generate_instance,
    make_partial_dft,
    make_svd_matrix,
)
from .se import SeState, Spectrum, mmse_bg, se_run, se_run_row_orthogonal

__version__ = "0.1.0"
