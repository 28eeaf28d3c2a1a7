"""Multi-stage PDE-based reconstruction, denoising and segmentation of noisy MRI-style images."""

from .config import PipelineConfig, reference_suite, preset
from .core import BlurSpec, LabelMap, NoiseSpec, add_gaussian_noise, apply_blur, make_phantom
from .diffusion import DiffusionCoefficient, PicardSettings, assemble_system, picard_denoise
from .pipeline import run, run_basic, run_experiment_grid, run_modified
from .segment import JenksSettings, jenks_classify, segment_image

__version__ = "0.1.0"

__all__ = [
    "BlurSpec", "DiffusionCoefficient", "JenksSettings", "LabelMap", "NoiseSpec", "PicardSettings",
    "PipelineConfig", "add_gaussian_noise", "apply_blur", "assemble_system", "jenks_classify",
    "make_phantom", "reference_suite", "picard_denoise", "preset", "run", "run_basic",
    "run_experiment_grid", "run_modified", "segment_image",
]
