"""scikit-learn style front ends for the noise prior and the denoiser pair."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from noisectl.collab import CollabParams
from noisectl.decompose import DecompParams, MaskVolume
from noisectl.diffusion import DiffusionSchedule, predict_joint, sample_video
from noisectl.exceptions import ParameterError, ShapeError, ValidationError
from noisectl.prior import MODES, NoisePrior
from noisectl.scene import SceneDataset, conditioning
from noisectl.train import DenoiserConfig, TrainConfig, fit_collab, train_denoisers


def check_masks(masks) -> MaskVolume:
    """Accept a MaskVolume or a binary background-mask array ``[V, N, 1, H, W]``."""
    if isinstance(masks, MaskVolume):
        return masks
    arr = np.asarray(masks, dtype=np.float64)
    if arr.ndim != 5:
        raise ShapeError(f"masks must be [V, N, 1, H, W], got {arr.shape}")
    return MaskVolume(arr)


def check_volume(x, name="volume") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 5:
        raise ShapeError(f"{name} must be [V, N, C, H, W], got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def _positive(value, name, integer=True, allow_zero=False):
    ok = value >= 0 if allow_zero else value > 0
    if (integer and int(value) != value) or not ok:
        kind = "nonnegative" if allow_zero else "positive"
        raise ParameterError(f"{name} must be a {kind} {'integer' if integer else 'number'}, got {value!r}")


class NoiseController(BaseEstimator, TransformerMixin):
    """Structured initial noise for multi-view clips.

    ``fit`` learns the collaboration matrices (nothing to learn when the
    window is 0 or the mode draws shared parts independently);
    ``transform`` maps background masks to composed noise.
    """

    def __init__(self, eta=1.0, lam=1.0, window_k=5, n_frames=16, n_views=6, mode="full",
                 renormalize=False, learning_rate=1e-3, n_steps=2000, batch_size=16, grid=(8, 8),
                 random_state=0):
        self.eta = eta
        self.lam = lam
        self.window_k = window_k
        self.n_frames = n_frames
        self.n_views = n_views
        self.mode = mode
        self.renormalize = renormalize
        self.learning_rate = learning_rate
        self.n_steps = n_steps
        self.batch_size = batch_size
        self.grid = grid
        self.random_state = random_state

    def _validate_params(self):
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        _positive(self.n_frames, "n_frames")
        _positive(self.n_views, "n_views")
        _positive(self.window_k, "window_k", allow_zero=True)
        if self.window_k > self.n_frames:
            raise ParameterError("window_k cannot exceed n_frames")
        _positive(self.learning_rate, "learning_rate", integer=False)
        _positive(self.n_steps, "n_steps", allow_zero=True)
        return DecompParams(float(self.eta), float(self.lam))

    @property
    def learns_collaboration(self) -> bool:
        return self.window_k > 0 and self.mode in ("full", "nodecomp")

    def fit(self, X=None, y=None):
        decomp = self._validate_params()
        cfg = TrainConfig(self.learning_rate, int(self.n_steps), int(self.batch_size),
                          int(self.random_state), grid=tuple(self.grid))
        init = CollabParams.init(int(self.n_frames), int(self.window_k), int(self.n_views))
        if self.learns_collaboration:
            params, trace = fit_collab(cfg, decomp, int(self.n_frames), int(self.window_k),
                                       int(self.n_views), init=init)
        else:
            params, trace = init, []
        self.decomp_ = decomp
        self.collab_ = params
        self.loss_trace_ = trace
        return self

    def set_collab(self, params: CollabParams):
        """Install previously fitted matrices instead of calling ``fit``."""
        decomp = self._validate_params()
        if params.K != self.window_k or params.n_frames != self.n_frames:
            raise ParameterError(f"params (K={params.K}, N={params.n_frames}) do not match the estimator")
        self.decomp_ = decomp
        self.collab_ = params
        self.loss_trace_ = []
        return self

    def prior(self, seed=None) -> NoisePrior:
        check_is_fitted(self, "collab_")
        seed = self.random_state if seed is None else seed
        return NoisePrior(self.decomp_, self.collab_, self.mode, int(seed), bool(self.renormalize))

    def sample(self, masks, draw=0, channels=1, seed=None):
        masks = check_masks(masks)
        if masks.shape[1] != self.n_frames:
            raise ShapeError(f"masks cover {masks.shape[1]} frames, controller expects {self.n_frames}")
        return self.prior(seed).draw(masks, draw, channels)

    def transform(self, X, draw=0, channels=1):
        return self.sample(X, draw, channels).composed


# first draw index used by sampling; training draws stay below it
GENERATION_DRAWS = 2_000_000


class JointDenoiser(BaseEstimator):
    """Background and foreground denoisers trained together on one scene."""

    def __init__(self, T=100, hidden=16, learning_rate=1e-3, n_steps=5000, frames_per_step=1,
                 objective="direct", weighting="x0", eval_every=500, use_conditioning=True, random_state=0):
        self.T = T
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.n_steps = n_steps
        self.frames_per_step = frames_per_step
        self.objective = objective
        self.weighting = weighting
        self.eval_every = eval_every
        self.use_conditioning = use_conditioning
        self.random_state = random_state

    def _cond(self, spec, masks):
        return conditioning(spec, masks) if self.use_conditioning else None

    def fit(self, X: SceneDataset, y=None, noise: NoiseController | NoisePrior | None = None):
        if not isinstance(X, SceneDataset):
            raise ValidationError("JointDenoiser.fit expects a SceneDataset")
        _positive(self.T, "T")
        _positive(self.hidden, "hidden")
        if noise is None:
            noise = NoiseController(n_frames=X.shape[1], window_k=min(5, X.shape[1]), n_steps=0).fit()
        prior = noise.prior() if isinstance(noise, NoiseController) else noise
        cfg = DenoiserConfig(self.learning_rate, int(self.n_steps), int(self.random_state), self.objective,
                             int(self.eval_every), frames_per_step=int(self.frames_per_step),
                             weighting=self.weighting)
        self.schedule_ = DiffusionSchedule(int(self.T))
        self.spec_ = X.spec
        self.masks_ = X.masks
        cond = self._cond(X.spec, X.masks)
        self.net_b_, self.net_f_, self.loss_trace_ = train_denoisers(
            X, prior, cfg, cond=cond, hidden=int(self.hidden), schedule=self.schedule_)
        return self

    def set_networks(self, net_b, net_f, spec, masks):
        """Install trained networks, e.g. loaded from checkpoints."""
        self.net_b_, self.net_f_ = net_b, net_f
        self.schedule_ = net_b.schedule
        self.spec_, self.masks_ = spec, check_masks(masks)
        self.loss_trace_ = []
        return self

    def predict(self, X, t, masks=None):
        """Combined noise estimate for a noisy latent ``X`` at step ``t``."""
        check_is_fitted(self, "net_b_")
        z = check_volume(X, "noisy latent")
        masks = self.masks_ if masks is None else check_masks(masks)
        cond = self._cond(self.spec_, masks)
        return predict_joint(z, masks, self.net_b_, self.net_f_, t, cond)[4]

    def generate(self, noise: NoiseController | NoisePrior, masks=None, channels=1):
        """Reverse-sample a clip; every noise draw comes from ``noise``."""
        check_is_fitted(self, "net_b_")
        masks = self.masks_ if masks is None else check_masks(masks)
        prior = noise.prior() if isinstance(noise, NoiseController) else noise
        merge = prior.effective_masks(masks)
        return sample_video(self.net_b_, self.net_f_, merge, prior.sampler(masks, channels, GENERATION_DRAWS), self.schedule_,
                            cond=self._cond(self.spec_, masks))
