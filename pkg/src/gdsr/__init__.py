"""Guided depth map super-resolution via closed-form DCT solves.

The core solves a gradient-transfer energy exactly in the cosine basis,
in the single-channel image domain and across a semi-coupled filter-bank
feature domain, with a bicubic degradation protocol, a quantile-based
edge attention stand-in, and a benchmark harness around them.
"""

from .image_core import (
    DepthMap,
    RgbImage,
    as_image,
    as_stack,
    dequantize,
    elementwise_combine,
    quantize,
)
from .dct import DctPlan, dct2_forward, dct2_inverse, dct2_naive
from .spectral import (
    FIVE_POINT,
    ConvergenceError,
    LaplacianKernel,
    SolverOptions,
    SpectralSymbol,
    build_rhs,
    cg_solve,
    derived_symbol,
    energy,
    laplacian_apply,
    paper_symbol,
    solve_screened,
)
from .guidance import EdgeWeightConfig, edge_weight, luminance, multichannel_edge_weight
from .feature_bank import (
    FilterBank,
    FilterPair,
    ReconstructionHead,
    apply_head,
    channel_solve,
    default_bank,
    extract,
    fit_head,
    fit_lambda,
    load_params,
    save_params,
)
from .resample import (
    bicubic_downsample,
    bicubic_kernel,
    bicubic_upsample,
    crop_to_multiple,
    degrade,
)
from .imgio import load_image, save_error_map, save_image
from .bench import (
    BenchRecord,
    DatasetEntry,
    DatasetManifest,
    PipelineConfig,
    load_manifest,
    predict,
    rmse,
    run_bench,
    run_image,
)

__version__ = "0.1.0"
