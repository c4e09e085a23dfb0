"""Volume-based multimodal guidance for a latent diffusion sampler."""

__version__ = "0.1.0"

from .errors import MdgError
from .geometry import cosine_distance, gram, normalize, volume, volume_grad
from .guidance import GuidanceConfig, mdg_sample
from .world import SyntheticWorld, make_world

__all__ = [
    "MdgError",
    "cosine_distance",
    "gram",
    "normalize",
    "volume",
    "volume_grad",
    "GuidanceConfig",
    "mdg_sample",
    "SyntheticWorld",
    "make_world",
    "__version__",
]
