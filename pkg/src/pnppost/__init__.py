"""Compression-artifact reduction by Plug-and-Play ADMM with a linearized codec."""
from .codecs import (
    BlockDctCodec,
    Codec,
    CodecError,
    PairTransformCodec,
    ScalarQuantCodec,
    SubprocessCodec,
    bitrate_to_step,
)
from .core import BlockGrid, ImageBuffer, extract_block, insert_block, read_pgm, write_pgm
from .denoise import dct_threshold_denoiser, gaussian_blur_denoiser
from .jacobian import LinearizedCodec, StepSet, estimate_block_jacobian, estimate_column
from .metrics import psnr, quality, ssim
from .presets import preset
from .solver import SolverConfig, SolverState, run, x_step

__version__ = "0.1.0"
