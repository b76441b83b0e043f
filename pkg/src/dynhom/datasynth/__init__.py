"""Dataset construction: synthetic dynamic scenes, static-clip detection,
and training-pair generation with exact ground truth."""

from .clips import ClipManifest, boundary_static, extract_static_clips
from .flow import block_matching_flow, mask_from_flow, moving_area_ratio
from .pairs import TrainingSample, generate_pair
from .scenes import SceneConfig, synth_dynamic_clip
from .store import LoadedDataset, load_dataset, write_dataset

__all__ = [
    "ClipManifest",
    "boundary_static",
    "extract_static_clips",
    "block_matching_flow",
    "mask_from_flow",
    "moving_area_ratio",
    "TrainingSample",
    "generate_pair",
    "SceneConfig",
    "synth_dynamic_clip",
    "LoadedDataset",
    "load_dataset",
    "write_dataset",
]
