"""Multi-frame noise collaboration.

The shared component of frame ``n + 1`` is built from the full scene noises
of the frames in a sliding window of length ``K`` ending at frame ``n``.
Each window frame ``i`` is mixed across views by ``S[i]`` (one 6x6 matrix
per scene channel) and then across channels, per view, by the impact block
of its window slot.

Per-channel noises are stacked on a leading channel axis: index 0 is the
background channel, index 1 the foreground channel.

Array layouts
-------------
S : ``[N, 2, 6, 6]``  frame, source channel, target view, source view
I : ``[K, 2, 2, 6]``  window slot, source channel, target channel, view
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from noisectl.decompose import (
    CHANNELS,
    N_VIEWS,
    DecompParams,
    SceneNoise,
    sample_residual,
    sample_shared,
)
from noisectl.exceptions import ParameterError, ShapeError, StateError
from noisectl.tensor import StreamKey, load_bundle, save_bundle


@dataclass
class CollabParams:
    S: np.ndarray
    I: np.ndarray
    K: int

    def __post_init__(self):
        self.S = np.ascontiguousarray(self.S, dtype=np.float64)
        self.I = np.ascontiguousarray(self.I, dtype=np.float64)
        self.K = int(self.K)
        if self.S.ndim != 4 or self.S.shape[1] != 2 or self.S.shape[2] != self.S.shape[3]:
            raise ShapeError(f"S must be [N, 2, V, V], got {self.S.shape}")
        v = self.S.shape[2]
        if self.I.shape != (self.K, 2, 2, v):
            raise ShapeError(f"I must be [K, 2, 2, {v}] with K={self.K}, got {self.I.shape}")
        if self.K < 0 or self.K > self.n_frames:
            raise ParameterError(f"window K={self.K} must lie in [0, N={self.n_frames}]")
        if not (np.all(np.isfinite(self.S)) and np.all(np.isfinite(self.I))):
            raise ParameterError("collaboration matrices must be finite")

    @property
    def n_frames(self) -> int:
        return self.S.shape[0]

    @property
    def n_views(self) -> int:
        return self.S.shape[2]

    @classmethod
    def init(cls, n_frames: int, window: int, n_views: int = N_VIEWS) -> "CollabParams":
        """Untrained parameters: a K-frame average of view-aligned history."""
        if window < 0 or window > n_frames:
            raise ParameterError(f"window K={window} must lie in [0, N={n_frames}]")
        S = np.zeros((n_frames, 2, n_views, n_views))
        if window > 0:
            S[:] = np.eye(n_views) / window
        I = np.zeros((window, 2, 2, n_views))
        I[:, 0, 0] = 1.0
        I[:, 1, 1] = 1.0
        return cls(S, I, window)

    def copy(self) -> "CollabParams":
        return CollabParams(self.S.copy(), self.I.copy(), self.K)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.S.ravel(), self.I.ravel()])

    def with_flat(self, vec) -> "CollabParams":
        vec = np.asarray(vec, dtype=np.float64)
        ns = self.S.size
        return CollabParams(vec[:ns].reshape(self.S.shape), vec[ns:].reshape(self.I.shape), self.K)

    def save(self, path) -> None:
        save_bundle(
            path,
            {"S": self.S, "I": self.I},
            {"kind": "collab", "K": self.K, "N": self.n_frames, "views": self.n_views},
        )

    @classmethod
    def load(cls, path) -> "CollabParams":
        tensors, header = load_bundle(path)
        return cls(tensors["S"], tensors["I"], int(header["K"]))


def window_start(n: int, K: int) -> int:
    """First frame (1-based) of the window that feeds frame ``n + 1``."""
    return max(n - K + 1, 1)


def contribution(S_i, I_k, eps_i) -> np.ndarray:
    """Collaborative contribution of one history frame.

    ``eps_i`` is ``[2, V, ...]``; the result has the same shape, with
    ``out[D, p] = sum_d I_k[d, D, p] * sum_q S_i[d, p, q] * eps_i[d, q]``.
    """
    S_i = np.asarray(S_i, dtype=np.float64)
    I_k = np.asarray(I_k, dtype=np.float64)
    eps_i = np.asarray(eps_i, dtype=np.float64)
    v = eps_i.shape[1] if eps_i.ndim >= 2 else -1
    if S_i.shape != (2, v, v) or I_k.shape != (2, 2, v) or eps_i.shape[0] != 2:
        raise ShapeError(
            f"contribution shapes disagree: S {S_i.shape}, I {I_k.shape}, eps {eps_i.shape}"
        )
    flat = eps_i.reshape(2, v, -1)
    mixed = np.matmul(S_i, flat)
    out = np.einsum("dDp,dpx->Dpx", I_k, mixed)
    return out.reshape(eps_i.shape)


def shared_next(history, params: CollabParams, n: int) -> np.ndarray:
    """Shared components of frame ``n + 1``.

    ``history`` is ``[L, 2, V, ...]`` holding full scene noises of frames
    ``n - L + 1 .. n`` (oldest first); it must cover the clamped window.
    """
    K = params.K
    if K == 0:
        raise ParameterError("collaboration is disabled (K = 0); sample shared components instead")
    history = np.asarray(history, dtype=np.float64)
    if history.ndim < 3 or history.shape[0] == 0:
        raise StateError("empty history with K > 0")
    if n < 1 or n > params.n_frames:
        raise ParameterError(f"frame n={n} outside 1..{params.n_frames}")
    start = window_start(n, K)
    width = n - start + 1
    if history.shape[0] < width:
        raise StateError(f"history holds {history.shape[0]} frames, window needs {width}")
    window = history[history.shape[0] - width:]
    v = params.n_views
    if window.shape[1:3] != (2, v):
        raise ShapeError(f"history frames must be [2, {v}, ...], got {window.shape[1:]}")
    flat = window.reshape(width, 2, v, -1)
    mixed = np.matmul(params.S[start - 1:n], flat)
    out = np.einsum("kdDp,kdpx->Dpx", params.I[:width], mixed)
    return out.reshape(window.shape[1:])


def _renormalize(shared: np.ndarray, p: DecompParams) -> np.ndarray:
    out = shared.copy()
    for d, ch in enumerate(CHANNELS):
        ms = float(np.mean(out[d] ** 2))
        if ms > 0:
            out[d] *= np.sqrt(p.shared_var(ch) / ms)
    return out


def roll_sequence(
    first_shared,
    p: DecompParams,
    c: CollabParams,
    n_frames: int,
    key: StreamKey,
    renormalize: bool = False,
    residuals=None,
) -> SceneNoise:
    """Noise for all frames: frame 1 uses ``first_shared``, later frames
    collaborate over the clamped window; residuals are sampled per frame.

    ``first_shared`` is a dict of ``[V, C, H, W]`` or an array ``[2, V, C, H, W]``.
    ``residuals`` optionally overrides sampling with ``[N, 2, V, C, H, W]``.
    With ``K = 0`` every frame's shared component is sampled afresh.
    """
    if n_frames < 1:
        raise ParameterError("need at least one frame")
    if isinstance(first_shared, dict):
        first_shared = [np.asarray(first_shared[d], dtype=np.float64) for d in CHANNELS]
        frame_shape = (len(CHANNELS),) + first_shared[0].shape
    else:
        first_shared = np.asarray(first_shared, dtype=np.float64)
        frame_shape = first_shared.shape
    v = frame_shape[1]
    if c.K > 0 and n_frames > c.n_frames + 1:
        raise ParameterError(f"collaboration params cover {c.n_frames} frames, asked for {n_frames}")

    def fill_residual(n, dest):
        if residuals is not None:
            dest[...] = residuals[n - 1]
            return
        r = sample_residual(p, n, key, frame_shape[2:], n_views=v)
        for i, d in enumerate(CHANNELS):
            dest[i] = r[d]

    shared = np.empty((n_frames,) + frame_shape)
    res = np.empty((n_frames,) + frame_shape)
    # the summed history is only read when frames collaborate
    full = np.empty((n_frames,) + frame_shape) if c.K > 0 else None
    for i in range(len(CHANNELS)):
        shared[0, i] = first_shared[i]
    fill_residual(1, res[0])
    if full is not None:
        np.add(shared[0], res[0], out=full[0])
    for n in range(1, n_frames):
        if c.K == 0:
            fresh = sample_shared(p, n + 1, key, frame_shape[2:], n_views=v)
            for i, d in enumerate(CHANNELS):
                shared[n, i] = fresh[d]
        else:
            start = window_start(n, c.K)
            s = shared_next(full[start - 1:n], c, n)
            shared[n] = _renormalize(s, p) if renormalize else s
        fill_residual(n + 1, res[n])
        if full is not None:
            np.add(shared[n], res[n], out=full[n])
    return _to_scene_noise(shared, res)


def _to_scene_noise(shared, residual) -> SceneNoise:
    # [N, 2, V, ...] -> per-channel [V, N, ...]
    return SceneNoise(
        shared={d: np.ascontiguousarray(np.moveaxis(shared[:, i], 0, 1)) for i, d in enumerate(CHANNELS)},
        residual={d: np.ascontiguousarray(np.moveaxis(residual[:, i], 0, 1)) for i, d in enumerate(CHANNELS)},
    )


def first_frame_base_mode(eps_1, p: DecompParams, n_frames: int) -> dict:
    """Shared components that scale frame-1 noise for every frame.

    ``eps_1`` is ``[V, C, H, W]``; returns per-channel ``[V, N, C, H, W]``.
    """
    eps_1 = np.asarray(eps_1, dtype=np.float64)
    out = {}
    for d in CHANNELS:
        base = p.shared_var(d) * eps_1
        out[d] = np.ascontiguousarray(np.broadcast_to(base[:, None], (eps_1.shape[0], n_frames) + eps_1.shape[1:]))
    return out


def first_frame_base_sequence(eps_1, p: DecompParams, n_frames: int, key: StreamKey) -> SceneNoise:
    """Ablation prior: scaled frame-1 noise plus fresh residuals per frame."""
    eps_1 = np.asarray(eps_1, dtype=np.float64)
    shared = first_frame_base_mode(eps_1, p, n_frames)
    v = eps_1.shape[0]
    res = {d: np.empty_like(shared[d]) for d in CHANNELS}
    for n in range(1, n_frames + 1):
        r = sample_residual(p, n, key, eps_1.shape[1:], n_views=v)
        for d in CHANNELS:
            res[d][:, n - 1] = r[d]
    return SceneNoise(shared=shared, residual=res)


def history_from_noise(noise: SceneNoise) -> np.ndarray:
    """Full noises as ``[N, 2, V, C, H, W]``."""
    return np.stack([np.moveaxis(noise.full(d), 1, 0) for d in CHANNELS], axis=1)
