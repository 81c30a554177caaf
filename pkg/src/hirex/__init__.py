"""hirex: training-free higher-resolution diffusion extrapolation engine."""

from .backend import (
    DenoiseRequest,
    DenoiseResponse,
    EdgeBiasedBackend,
    LinearBackend,
    OracleBackend,
    ToyCodec,
    ZeroBackend,
    make_toy_backend,
    predict_noise,
    toy_codec,
)
from .dilation import (
    DilationPlan,
    WindowBijection,
    blend_global,
    dilate_extract,
    dilate_recombine,
    eta_schedule,
    shuffle_windows,
)
from .edges import canny_edges, sample_condition_patches
from .errors import (
    BackendError,
    GeometryError,
    HirexError,
    ProtocolError,
    RemoteError,
    ShapeError,
    ValidationError,
)
from .images import read_pnm, upscale_image, write_pnm
from .latent import interpolate_latent, read_ltns, write_ltns
from .patches import PatchPlan, PatchWindow, extract_patch, fuse_patches, plan_patches
from .pipeline import GenerationConfig, RunResult, plan_conditioned_steps, run, run_stage
from .prompts import (
    CrossAttentionMap,
    PatchPromptSet,
    WordMask,
    binarize_attention,
    derive_patch_prompts,
    mean_combine_attention,
    open_mask,
    upscale_mask,
)
from .remote import EchoServer, RemoteBackend, RemoteCodec, RemoteSession
from .schedule import (
    NoiseSchedule,
    ddim_step,
    forward_diffuse,
    inference_timesteps,
    make_schedule,
)

__version__ = "0.1.0"
