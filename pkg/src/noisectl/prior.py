"""Structured initial-noise priors, one per ablation mode.

A prior turns a key and a mask volume into the composed noise for a whole
clip. Draw index ``d`` selects an independent clip, so training steps and
reverse-sampling steps each read their own lane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from noisectl.collab import CollabParams, first_frame_base_sequence, roll_sequence
from noisectl.decompose import CHANNELS, DecompParams, MaskVolume, SceneNoise, compose_initial, sample_first_frame_shared
from noisectl.exceptions import ConfigError
from noisectl.tensor import StreamKey

MODES = ("full", "nocollab", "firstframe", "nodecomp", "baseline")


@dataclass(frozen=True)
class PriorDraw:
    noise: SceneNoise
    masked_b: np.ndarray
    masked_f: np.ndarray
    composed: np.ndarray
    masks: MaskVolume


class NoisePrior:
    """``mode`` is one of :data:`MODES`:

    ``full``        decomposition with collaboration
    ``nocollab``    decomposition, shared components drawn afresh per frame
    ``firstframe``  every frame's shared part scales the composed frame-1 noise
    ``nodecomp``    single all-background scene, collaboration on
    ``baseline``    single all-background scene, no collaboration
    """

    def __init__(self, p: DecompParams, c: CollabParams, mode: str = "full",
                 seed: int = 0, renormalize: bool = False):
        if mode not in MODES:
            raise ConfigError(f"unknown noise mode {mode!r}; expected one of {', '.join(MODES)}")
        self.p = p
        self.c = c
        self.mode = mode
        self.seed = int(seed)
        self.renormalize = bool(renormalize)

    @property
    def collaborates(self) -> bool:
        return self.mode in ("full", "nodecomp") and self.c.K > 0

    def effective_masks(self, masks: MaskVolume) -> MaskVolume:
        if self.mode in ("nodecomp", "baseline"):
            v, n, _, h, w = masks.shape
            return MaskVolume.ones(n, h, w, n_views=v)
        return masks

    def key(self, draw: int) -> StreamKey:
        return StreamKey(self.seed, (0, 0, 0, 0, int(draw)))

    def scene_noise(self, masks: MaskVolume, draw: int = 0, channels: int = 1) -> SceneNoise:
        v, n, _, h, w = masks.shape
        key = self.key(draw)
        first = sample_first_frame_shared(self.p, key, (channels, h, w), n_views=v)
        if self.mode == "firstframe":
            noise1 = roll_sequence(first, self.p, CollabParams.init(n, 0, v), 1, key)
            eps_1 = compose_initial(noise1, masks.frames(0, 1).mask_b)[2][:, 0]
            return first_frame_base_sequence(eps_1, self.p, n, key)
        c = self.c if self.collaborates else CollabParams.init(max(n - 1, 1), 0, v)
        return roll_sequence(first, self.p, c, n, key, renormalize=self.renormalize)

    def draw(self, masks: MaskVolume, draw: int = 0, channels: int = 1) -> PriorDraw:
        masks = self.effective_masks(masks)
        noise = self.scene_noise(masks, draw, channels)
        nb, nf, eps = compose_initial(noise, masks)
        return PriorDraw(noise, nb, nf, eps, masks)

    def composed(self, masks: MaskVolume, draw: int = 0, channels: int = 1) -> np.ndarray:
        return self.draw(masks, draw, channels).composed

    def sampler(self, masks: MaskVolume, channels: int = 1, offset: int = 0):
        """``draw -> composed noise`` closure for reverse sampling."""
        return lambda d: self.composed(masks, offset + d, channels)


def channel_stack(noise: SceneNoise) -> np.ndarray:
    return np.stack([noise.full(d) for d in CHANNELS])
