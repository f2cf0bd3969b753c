"""Scene-level (background/foreground) and individual-level (shared/residual)
noise decomposition.

Volumes use the layout ``[view, frame, channel, height, width]`` with six
views. Masks carry a singleton channel axis and broadcast over channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from noisectl._parallel import pmap
from noisectl.exceptions import ParameterError, ShapeError, ValidationError
from noisectl.tensor import StreamKey, gaussian_sample

N_VIEWS = 6
CHANNELS = ("B", "F")


@dataclass(frozen=True)
class DecompParams:
    """Shared/residual variance split for the two scene channels.

    ``eta`` controls the background split and ``lam`` the foreground split;
    the shared variance is ``x**2 / (x**2 + 1)`` and the residual variance
    ``1 / (x**2 + 1)``.
    """

    eta: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        for name in ("eta", "lam"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0:
                raise ParameterError(f"{name} must be a positive finite number, got {v}")
            object.__setattr__(self, name, v)

    @property
    def shared_var_b(self) -> float:
        return self.eta**2 / (self.eta**2 + 1.0)

    @property
    def shared_var_f(self) -> float:
        return self.lam**2 / (self.lam**2 + 1.0)

    @property
    def residual_var_b(self) -> float:
        return 1.0 / (self.eta**2 + 1.0)

    @property
    def residual_var_f(self) -> float:
        return 1.0 / (self.lam**2 + 1.0)

    def shared_var(self, channel: str) -> float:
        return self.shared_var_b if channel == "B" else self.shared_var_f

    def residual_var(self, channel: str) -> float:
        return self.residual_var_b if channel == "B" else self.residual_var_f


class MaskVolume:
    """Binary background mask; the foreground mask is its complement."""

    def __init__(self, mask_b):
        mask_b = np.ascontiguousarray(mask_b, dtype=np.float64)
        if mask_b.ndim != 5 or mask_b.shape[2] != 1:
            raise ShapeError(f"mask must be [views, frames, 1, H, W], got {mask_b.shape}")
        if not np.all((mask_b == 0.0) | (mask_b == 1.0)):
            raise ValidationError("mask values must be exactly 0 or 1")
        self.mask_b = mask_b
        self.mask_b.setflags(write=False)

    @classmethod
    def ones(cls, n_frames, height, width, n_views=N_VIEWS):
        return cls(np.ones((n_views, n_frames, 1, height, width)))

    @property
    def mask_f(self) -> np.ndarray:
        return 1.0 - self.mask_b

    @property
    def shape(self):
        return self.mask_b.shape

    def channel(self, name: str) -> np.ndarray:
        return self.mask_b if name == "B" else self.mask_f

    def frames(self, start, stop) -> "MaskVolume":
        return MaskVolume(self.mask_b[:, start:stop])


@dataclass
class SceneNoise:
    """Shared and residual parts of both scene-level noises.

    Each entry of ``shared`` and ``residual`` is ``[views, frames, C, H, W]``.
    """

    shared: dict
    residual: dict

    def full(self, channel: str) -> np.ndarray:
        return self.shared[channel] + self.residual[channel]

    @property
    def shape(self):
        return self.shared["B"].shape


def _lane_draws(key: StreamKey, frame: int, component: str, variances: dict, shape, n_views):
    lanes = [(d, m) for d in CHANNELS for m in range(n_views)]
    # lanes write into disjoint slices, so the thread count cannot change the result
    out = {d: np.empty((n_views,) + shape) for d in CHANNELS}

    def draw(lane):
        d, m = lane
        k = key.with_lane(view=m, frame=frame, channel=d, component=component)
        gaussian_sample(shape, variances[d], k, out=out[d][m])

    pmap(draw, lanes)
    return out


def sample_first_frame_shared(p: DecompParams, key: StreamKey, shape, n_views=N_VIEWS) -> dict:
    """Independent per-view shared draws for frame 1, each ``[views, *shape]``."""
    variances = {"B": p.shared_var_b, "F": p.shared_var_f}
    return _lane_draws(key, 1, "shared", variances, tuple(shape), n_views)


def sample_shared(p: DecompParams, frame: int, key: StreamKey, shape, n_views=N_VIEWS) -> dict:
    """Freshly sampled shared components for an arbitrary frame (collaboration off)."""
    if frame < 1:
        raise ParameterError("frames are numbered from 1")
    variances = {"B": p.shared_var_b, "F": p.shared_var_f}
    return _lane_draws(key, frame, "shared", variances, tuple(shape), n_views)


def sample_residual(p: DecompParams, frame: int, key: StreamKey, shape, n_views=N_VIEWS) -> dict:
    if frame < 1:
        raise ParameterError("frames are numbered from 1")
    variances = {"B": p.residual_var_b, "F": p.residual_var_f}
    return _lane_draws(key, frame, "residual", variances, tuple(shape), n_views)


def check_binary(mask) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64)
    if not np.all((mask == 0.0) | (mask == 1.0)):
        raise ValidationError("mask values must be exactly 0 or 1")
    return mask


def compose_initial(noise: SceneNoise, masks) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mask the two full scene noises and add them.

    Returns ``(masked_background, masked_foreground, composed)``.
    """
    mask_b = masks.mask_b if isinstance(masks, MaskVolume) else check_binary(masks)
    full_b = noise.full("B")
    full_f = noise.full("F")
    if full_b.shape != full_f.shape:
        raise ShapeError("background and foreground noise shapes differ")
    try:
        mb = np.broadcast_to(mask_b, full_b.shape)
    except ValueError as exc:
        raise ShapeError(f"mask {mask_b.shape} does not fit noise {full_b.shape}") from exc
    # full_b and full_f are fresh sums, so masking them in place is safe
    nb = np.multiply(full_b, mb, out=full_b)
    nf = np.multiply(full_f, 1.0 - mb, out=full_f)
    return nb, nf, nb + nf
