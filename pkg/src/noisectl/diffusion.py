"""Forward noising, two-network masked noise prediction and reverse sampling.

Volumes are ``[view, frame, C, H, W]``. A denoiser is any callable
``denoiser(z, t, cond) -> eps`` acting on image batches ``[B, C, H, W]``;
``cond`` is a ``[B, Cc, H, W]`` conditioning stack or ``None``.
"""

from __future__ import annotations

import numpy as np

from noisectl._conv import conv_backward, conv_forward
from noisectl.decompose import MaskVolume, check_binary
from noisectl.exceptions import ParameterError, ShapeError
from noisectl.tensor import load_bundle, save_bundle


class DiffusionSchedule:
    """Linear beta schedule with cumulative products ``alpha_bar``.

    Steps are numbered ``1..T``; index ``t`` reads ``betas[t - 1]``.
    """

    def __init__(self, T: int = 100, beta_start: float = 1e-4, beta_end: float = 0.02, betas=None):
        if betas is None:
            if T < 1:
                raise ParameterError("T must be >= 1")
            betas = np.linspace(beta_start, beta_end, T)
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size == 0 or np.any(betas <= 0) or np.any(betas >= 1):
            raise ParameterError("betas must lie strictly inside (0, 1)")
        self.T = betas.size
        self.beta_start = float(betas[0])
        self.beta_end = float(betas[-1])
        self.betas = betas
        self.alphas = 1.0 - betas
        self.alpha_bar = np.cumprod(self.alphas)

    def check_step(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.T:
            raise ParameterError(f"step t={t} outside 1..{self.T}")
        return t

    def ab(self, t: int) -> float:
        return float(self.alpha_bar[self.check_step(t) - 1])

    def ab_prev(self, t: int) -> float:
        t = self.check_step(t)
        return 1.0 if t == 1 else float(self.alpha_bar[t - 2])

    def posterior_variance(self, t: int) -> float:
        t = self.check_step(t)
        beta = self.betas[t - 1]
        return float(beta * (1.0 - self.ab_prev(t)) / (1.0 - self.ab(t)))

    def snr(self) -> np.ndarray:
        return self.alpha_bar / (1.0 - self.alpha_bar)


def masked_gt_noise(eps_b, eps_f, masks):
    """Masked scene noises and their sum: ``(N_B, N_F, eps)``."""
    eps_b = np.asarray(eps_b, dtype=np.float64)
    eps_f = np.asarray(eps_f, dtype=np.float64)
    if eps_b.shape != eps_f.shape:
        raise ShapeError(f"background {eps_b.shape} and foreground {eps_f.shape} differ")
    mask_b = masks.mask_b if isinstance(masks, MaskVolume) else check_binary(masks)
    try:
        mb = np.broadcast_to(mask_b, eps_b.shape)
    except ValueError as exc:
        raise ShapeError(f"mask {mask_b.shape} does not fit noise {eps_b.shape}") from exc
    nb = eps_b * mb
    nf = eps_f * (1.0 - mb)
    return nb, nf, nb + nf


def noisify_alpha_bar(x0, eps, alpha_bar: float):
    if not 0.0 <= alpha_bar <= 1.0:
        raise ParameterError("alpha_bar must lie in [0, 1]")
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ShapeError(f"x0 {x0.shape} and noise {eps.shape} differ")
    return np.sqrt(alpha_bar) * x0 + np.sqrt(1.0 - alpha_bar) * eps


def noisify(x0, eps_t, t: int, sched: DiffusionSchedule):
    return noisify_alpha_bar(x0, eps_t, sched.ab(t))


# --- denoisers ------------------------------------------------------------


class ConvDenoiser:
    """Three 3x3 convolution layers with tanh between them.

    Input channels are the noisy latent, a constant ``t / T`` plane and the
    conditioning stack. With ``parametrization="x0"`` the network output
    ``h`` is read as a clean-latent estimate and converted to noise,
    ``eps = (gain * z - sqrt(ab_t) * h) / sqrt(1 - ab_t)``; with ``"eps"``
    the output is the noise itself. All-zero parameters predict zero noise
    in both cases.
    """

    PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3", "gain")

    def __init__(self, channels=1, cond_channels=0, hidden=16, schedule=None,
                 parametrization="x0", params=None, seed=0):
        if parametrization not in ("x0", "eps"):
            raise ParameterError(f"unknown parametrization {parametrization!r}")
        self.channels = int(channels)
        self.cond_channels = int(cond_channels)
        self.hidden = int(hidden)
        self.schedule = schedule if schedule is not None else DiffusionSchedule()
        self.parametrization = parametrization
        if params is None:
            params = self._init_params(seed)
        self.params = {k: np.array(params[k], dtype=np.float64) for k in self.PARAM_NAMES}
        self._check_shapes()

    @property
    def in_channels(self):
        return self.channels + 1 + self.cond_channels

    def _shapes(self):
        c, h = self.in_channels, self.hidden
        return {
            "w1": (h, c, 3, 3), "b1": (h,),
            "w2": (h, h, 3, 3), "b2": (h,),
            "w3": (self.channels, h, 3, 3), "b3": (self.channels,),
            "gain": (),
        }

    def _check_shapes(self):
        for k, shape in self._shapes().items():
            if self.params[k].shape != shape:
                raise ShapeError(f"parameter {k} has shape {self.params[k].shape}, expected {shape}")
            if not np.all(np.isfinite(self.params[k])):
                raise ParameterError(f"parameter {k} is not finite")

    def _init_params(self, seed):
        rng = np.random.default_rng(seed)
        out = {}
        for k, shape in self._shapes().items():
            if k.startswith("w"):
                fan_in = shape[1] * 9
                out[k] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)
            else:
                out[k] = np.zeros(shape)
        out["w3"] *= 0.1
        out["gain"] = np.array(1.0 if self.parametrization == "x0" else 0.0)
        return out

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self._shapes().values())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in self.PARAM_NAMES])

    def set_flat(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        i = 0
        for k, shape in self._shapes().items():
            size = int(np.prod(shape))
            self.params[k] = vec[i:i + size].reshape(shape).copy()
            i += size

    def copy(self) -> "ConvDenoiser":
        return ConvDenoiser(self.channels, self.cond_channels, self.hidden, self.schedule,
                            self.parametrization, params=self.params)

    def zero(self) -> "ConvDenoiser":
        return ConvDenoiser(self.channels, self.cond_channels, self.hidden, self.schedule,
                            self.parametrization, params={k: np.zeros_like(v) for k, v in self.params.items()})

    def _inputs(self, z, t, cond):
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 4 or z.shape[1] != self.channels:
            raise ShapeError(f"expected [B, {self.channels}, H, W] input, got {z.shape}")
        tplane = np.full((z.shape[0], 1) + z.shape[2:], t / self.schedule.T)
        parts = [z, tplane]
        if self.cond_channels:
            if cond is None or np.shape(cond)[1] != self.cond_channels:
                raise ShapeError(f"denoiser expects {self.cond_channels} conditioning channels")
            parts.append(np.asarray(cond, dtype=np.float64))
        return np.concatenate(parts, axis=1)

    CHUNK = 16  # images per pass when no cache is kept; large buffers are slow to allocate

    def forward(self, z, t, cond=None, cache=False):
        t = self.schedule.check_step(t)
        n = np.shape(z)[0]
        if not cache and n > self.CHUNK:
            parts = [self.forward(z[i:i + self.CHUNK], t, None if cond is None else cond[i:i + self.CHUNK])
                     for i in range(0, n, self.CHUNK)]
            return np.concatenate(parts)
        p = self.params
        x = self._inputs(z, t, cond)
        a1, c1 = conv_forward(x, p["w1"], p["b1"])
        h1 = np.tanh(a1)
        a2, c2 = conv_forward(h1, p["w2"], p["b2"])
        h2 = np.tanh(a2)
        out, c3 = conv_forward(h2, p["w3"], p["b3"])
        if self.parametrization == "x0":
            ab = self.schedule.ab(t)
            s = np.sqrt(1.0 - ab)
            eps = (p["gain"] * z - np.sqrt(ab) * out) / s
        else:
            eps = out + p["gain"] * z
        if cache:
            return eps, (x, c1, h1, c2, h2, c3, np.asarray(z, dtype=np.float64), t)
        return eps

    __call__ = forward

    def backward(self, deps, cache) -> dict:
        """Gradients of a scalar loss w.r.t. every parameter, given dL/deps."""
        x, c1, h1, c2, h2, c3, z, t = cache
        p = self.params
        if self.parametrization == "x0":
            ab = self.schedule.ab(t)
            s = np.sqrt(1.0 - ab)
            dout = -np.sqrt(ab) / s * deps
            dgain = np.sum(deps * z) / s
        else:
            dout = deps
            dgain = np.sum(deps * z)
        dh2, dw3, db3 = conv_backward(dout, c3, h2.shape, p["w3"])
        da2 = dh2 * (1.0 - h2 * h2)
        dh1, dw2, db2 = conv_backward(da2, c2, h1.shape, p["w2"])
        da1 = dh1 * (1.0 - h1 * h1)
        _, dw1, db1 = conv_backward(da1, c1, x.shape, p["w1"], need_dx=False)
        return {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2, "w3": dw3, "b3": db3,
                "gain": np.array(dgain)}

    def header(self) -> dict:
        return {
            "kind": "denoiser",
            "arch": "conv3x3-tanh-3layer",
            "channels": self.channels,
            "cond_channels": self.cond_channels,
            "hidden": self.hidden,
            "parametrization": self.parametrization,
            "T": self.schedule.T,
            "beta_start": repr(self.schedule.beta_start),
            "beta_end": repr(self.schedule.beta_end),
        }

    def save(self, path):
        save_bundle(path, self.params, self.header())

    @classmethod
    def load(cls, path) -> "ConvDenoiser":
        tensors, h = load_bundle(path)
        sched = DiffusionSchedule(int(h["T"]), float(h["beta_start"]), float(h["beta_end"]))
        return cls(int(h["channels"]), int(h["cond_channels"]), int(h["hidden"]), sched,
                   h["parametrization"], params=tensors)


class FixedDenoiser:
    """Returns a stored noise batch regardless of input."""

    def __init__(self, eps):
        self.eps = np.asarray(eps, dtype=np.float64)

    def __call__(self, z, t, cond=None):
        return self.eps


class OracleDenoiser:
    """Ground-truth noise for a known clean latent: the noise that explains
    ``z`` at step ``t`` given ``x0``."""

    def __init__(self, x0_images, schedule: DiffusionSchedule):
        self.x0 = np.asarray(x0_images, dtype=np.float64)
        self.schedule = schedule

    def __call__(self, z, t, cond=None):
        ab = self.schedule.ab(t)
        return (np.asarray(z) - np.sqrt(ab) * self.x0) / np.sqrt(1.0 - ab)


# --- joint prediction and sampling ------------------------------------------


def to_images(vol):
    vol = np.asarray(vol, dtype=np.float64)
    return vol.reshape((-1,) + vol.shape[2:])


def from_images(images, like_shape):
    return np.asarray(images).reshape(like_shape)


def predict_joint(z_t, masks, net_b, net_f, t, cond=None):
    """Run both denoisers on the same noisy latent and merge through masks.

    Returns ``(eps_b, eps_f, masked_b, masked_f, combined)``, all shaped
    like ``z_t``.
    """
    z_t = np.asarray(z_t, dtype=np.float64)
    if z_t.ndim != 5:
        raise ShapeError(f"z_t must be [V, N, C, H, W], got {z_t.shape}")
    imgs = to_images(z_t)
    cimg = None if cond is None else to_images(cond)
    eps_b = from_images(net_b(imgs, t, cimg), z_t.shape)
    eps_f = from_images(net_f(imgs, t, cimg), z_t.shape)
    nb, nf, combined = masked_gt_noise(eps_b, eps_f, masks)
    return eps_b, eps_f, nb, nf, combined


def reverse_step(z, eps_pred, t, sched: DiffusionSchedule, noise=None):
    """One ancestral update from step ``t`` to ``t - 1``."""
    beta = sched.betas[t - 1]
    mean = (z - beta / np.sqrt(1.0 - sched.ab(t)) * eps_pred) / np.sqrt(sched.alphas[t - 1])
    if t == 1 or noise is None:
        return mean
    return mean + np.sqrt(sched.posterior_variance(t)) * noise


def reverse_sample(z_start, t_start, predict, sched: DiffusionSchedule, noise_fn=None):
    """Run ancestral sampling from ``z_start`` at step ``t_start`` down to 0.

    ``predict(z, t)`` returns the noise estimate; ``noise_fn(t)`` supplies
    the fresh noise added after step ``t`` (``None`` gives the mean path).
    """
    z = np.asarray(z_start, dtype=np.float64)
    for t in range(sched.check_step(t_start), 0, -1):
        eps = predict(z, t)
        noise = noise_fn(t) if (noise_fn is not None and t > 1) else None
        z = reverse_step(z, eps, t, sched, noise)
    return z


def sample_video(net_b, net_f, masks, prior, sched: DiffusionSchedule, cond=None, start=None):
    """Generate a latent video.

    ``prior(draw)`` returns a composed noise volume ``[V, N, C, H, W]``;
    draw 0 seeds ``z_T`` and draw ``t`` the noise injected after step
    ``t``, so the whole trajectory is fixed by the prior's key.
    """
    z = prior(0) if start is None else np.asarray(start, dtype=np.float64)

    def predict(zz, t):
        return predict_joint(zz, masks, net_b, net_f, t, cond)[4]

    return reverse_sample(z, sched.T, predict, sched, noise_fn=prior)
