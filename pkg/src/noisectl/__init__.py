"""Structured multi-view noise priors with masked joint denoising."""

from noisectl.collab import CollabParams, roll_sequence, shared_next
from noisectl.decompose import DecompParams, MaskVolume, SceneNoise, compose_initial
from noisectl.diffusion import ConvDenoiser, DiffusionSchedule, predict_joint, sample_video
from noisectl.estimators import JointDenoiser, NoiseController
from noisectl.prior import NoisePrior
from noisectl.scene import SceneSpec, build_dataset
from noisectl.tensor import StreamKey, gaussian_sample

__version__ = "0.1.0"

__all__ = [
    "CollabParams",
    "ConvDenoiser",
    "DecompParams",
    "DiffusionSchedule",
    "JointDenoiser",
    "MaskVolume",
    "NoiseController",
    "NoisePrior",
    "SceneNoise",
    "SceneSpec",
    "StreamKey",
    "build_dataset",
    "compose_initial",
    "gaussian_sample",
    "predict_joint",
    "roll_sequence",
    "sample_video",
    "shared_next",
]
