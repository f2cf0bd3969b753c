"""Gradient-descent loops for the collaboration matrices and the denoiser pair."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from noisectl.collab import CollabParams, history_from_noise, roll_sequence
from noisectl.decompose import CHANNELS, DecompParams, MaskVolume, sample_first_frame_shared, sample_residual
from noisectl.diffusion import ConvDenoiser, DiffusionSchedule, noisify, to_images
from noisectl.exceptions import ParameterError
from noisectl.prior import PriorDraw
from noisectl.losses import direct_frame_loss, rolled_coefficient_loss, scene_noise_loss, total_loss
from noisectl.tensor import StreamKey

LOG = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    steps: int = 2000
    batch_size: int = 16
    seed: int = 0
    grad_tol: float = 1e-4
    grid: tuple = (8, 8)

    def __post_init__(self):
        if self.learning_rate <= 0 or self.steps < 0 or self.batch_size < 1:
            raise ParameterError("learning rate and batch size must be positive, steps >= 0")
        if any(int(g) < 1 for g in self.grid):
            raise ParameterError("grid dims must be positive")


def fixed_draws(p: DecompParams, n_frames: int, key: StreamKey, frame_shape, n_views=6):
    """First-frame shared ``[2, V, ...]`` and residuals ``[N, 2, V, ...]``."""
    first = sample_first_frame_shared(p, key, frame_shape, n_views=n_views)
    first = np.stack([first[d] for d in CHANNELS])
    res = np.empty((n_frames,) + first.shape)
    for n in range(1, n_frames + 1):
        r = sample_residual(p, n, key, frame_shape, n_views=n_views)
        res[n - 1] = np.stack([r[d] for d in CHANNELS])
    return first, res


def rolled_histories(first, residuals, p: DecompParams, c: CollabParams) -> np.ndarray:
    """Histories ``[batch, N, 2, V, ...]`` rolled under ``c``; the batch
    axis is the leading trailing axis of the draws."""
    noise = roll_sequence(first, p, c, residuals.shape[0], key=None, residuals=residuals)
    hist = history_from_noise(noise)  # [N, 2, V, B, ...]
    # batch folds into the pixel axes: the moments average over both
    return hist.reshape((1,) + hist.shape[:3] + (-1,))


def fit_collab(cfg: TrainConfig, p: DecompParams, n_frames: int = 16, window: int = 5,
               n_views: int = 6, init: CollabParams | None = None):
    """Fit S and I by gradient descent on the coefficient loss.

    Histories are rolled from one fixed set of draws under the current
    parameters, and the gradient runs through that recursion.
    Returns ``(params, trace)`` where ``trace`` is a list of
    ``(step, L_C, L_B, L_F)`` tuples evaluated before each update.
    """
    c = init.copy() if init is not None else CollabParams.init(n_frames, window, n_views)
    trace = []
    if c.K == 0:
        return c, trace
    key = StreamKey(cfg.seed, (0, 0, 0, 0, 0))
    first, res = fixed_draws(p, n_frames, key, (cfg.batch_size, 1) + tuple(cfg.grid), n_views)
    for step in range(cfg.steps + 1):
        total, (lb, lf), grad = rolled_coefficient_loss(c, p, first, res, return_grad=True)
        trace.append((step, total, lb, lf))
        if step == cfg.steps:
            break
        c = CollabParams(c.S - cfg.learning_rate * grad.S, c.I - cfg.learning_rate * grad.I, c.K)
    LOG.info("fit_collab: L_C %.4g -> %.4g", trace[0][1], trace[-1][1])
    return c, trace


def write_trace_csv(path, rows, header=("step", "L_C", "L_B_t", "L_F_t", "L")):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


@dataclass
class DenoiserConfig:
    learning_rate: float = 1e-3
    steps: int = 5000
    seed: int = 0
    objective: str = "direct"
    eval_every: int = 500
    n_probes: int = 8
    frames_per_step: int = 1
    weighting: str = "x0"

    def __post_init__(self):
        if self.learning_rate <= 0 or self.steps < 0 or min(self.eval_every, self.n_probes, self.frames_per_step) < 1:
            raise ParameterError("learning rate, eval interval, probe and frame counts must be positive, steps >= 0")
        if self.objective not in ("direct", "collab"):
            raise ParameterError(f"unknown objective {self.objective!r}")
        if self.weighting not in ("x0", "none"):
            raise ParameterError(f"unknown loss weighting {self.weighting!r}")


def _frame_terms(objective, mask, gt, pred, c, channel):
    """Per-frame loss sum for one channel and its gradient w.r.t. ``pred``."""
    total = 0.0
    grad = np.zeros_like(pred)
    for n in range(1, gt.shape[1] + 1):
        if objective == "direct":
            val, g = direct_frame_loss(mask, gt, pred, n, return_grad=True)
        else:
            val, g = scene_noise_loss(mask, gt, pred, c, n, channel, return_grad=True)
        total += val
        grad += g
    return total, grad


def select_frames(draw, frames):
    """Restrict a prior draw to the given 0-based frame indices."""
    fr = np.asarray(frames)
    return PriorDraw(draw.noise, draw.masked_b[:, fr], draw.masked_f[:, fr], draw.composed[:, fr],
                     MaskVolume(draw.masks.mask_b[:, fr]))


def step_weight(sched, t: int, weighting: str = "x0") -> float:
    """``sqrt(1 - ab) / sqrt(ab)`` turns a noise-space norm into the
    matching clean-latent norm; without it small ``t`` dominates by ~100x."""
    if weighting == "none":
        return 1.0
    ab = sched.ab(t)
    return float(np.sqrt((1.0 - ab) / ab))


def denoiser_loss(net_b, net_f, x0, cond, draw, t, sched, c=None, objective="direct", return_grad=False,
                  weighting="x0"):
    """Summed per-frame masked losses of both networks at step ``t``.

    ``draw`` is a :class:`~noisectl.prior.PriorDraw` supplying the ground
    truth masked noises and the masks the networks are merged through.
    Both sums are scaled by :func:`step_weight`.
    """
    z = noisify(x0, draw.composed, t, sched)
    imgs = to_images(z)
    cimg = None if cond is None else to_images(cond)
    if return_grad:
        eps_b, cache_b = net_b.forward(imgs, t, cimg, cache=True)
        eps_f, cache_f = net_f.forward(imgs, t, cimg, cache=True)
    else:
        eps_b, eps_f = net_b.forward(imgs, t, cimg), net_f.forward(imgs, t, cimg)
    eps_b = eps_b.reshape(z.shape)
    eps_f = eps_f.reshape(z.shape)
    mb = np.broadcast_to(draw.masks.mask_b, z.shape)
    mf = 1.0 - mb
    lb, gb = _frame_terms(objective, draw.masks.mask_b, draw.masked_b, eps_b * mb, c, "B")
    lf, gf = _frame_terms(objective, draw.masks.mask_f, draw.masked_f, eps_f * mf, c, "F")
    w = step_weight(sched, t, weighting)
    lb, lf = w * lb, w * lf
    if not return_grad:
        return lb, lf
    gb, gf = w * gb, w * gf
    grad_b = net_b.backward(to_images(gb * mb), cache_b)
    grad_f = net_f.backward(to_images(gf * mf), cache_f)
    return lb, lf, grad_b, grad_f


def probe_points(cfg: DenoiserConfig, T: int):
    """Fixed ``(t, draw)`` pairs spread over the schedule for eval losses."""
    ts = np.unique(np.linspace(1, T, cfg.n_probes).round().astype(int))
    # probe draws sit far above any training draw index
    return [(int(t), 10**6 + i) for i, t in enumerate(ts)]


def probe_loss(net_b, net_f, x0, cond, prior, masks, sched, probes, c=None, objective="direct", weighting="x0"):
    lb = lf = 0.0
    for t, d in probes:
        draw = prior.draw(masks, d, x0.shape[2])
        b, f = denoiser_loss(net_b, net_f, x0, cond, draw, t, sched, c, objective, weighting=weighting)
        lb += b
        lf += f
    return lb / len(probes), lf / len(probes)


def train_denoisers(dataset, prior, cfg: DenoiserConfig, cond=None, nets=None, coeff_loss: float = 0.0,
                    hidden: int = 16, schedule=None):
    """Fit the background/foreground denoiser pair on one dataset.

    Each step draws ``t`` uniformly from ``1..T`` and a fresh clip of prior
    noise, then takes one fixed-size gradient step on both networks. The
    returned trace holds probe-set losses every ``eval_every`` steps as
    ``(step, L_C, L_B, L_F, L)``; ``L_C`` is the constant ``coeff_loss`` of
    the already-fitted collaboration parameters.
    """
    x0 = np.asarray(dataset.latents, dtype=np.float64)
    masks = dataset.masks
    if x0.size == 0:
        raise ParameterError("dataset is empty")
    sched = schedule if schedule is not None else DiffusionSchedule()
    n_cond = 0 if cond is None else cond.shape[2]
    if nets is None:
        nets = (ConvDenoiser(x0.shape[2], n_cond, hidden, sched, seed=cfg.seed * 2 + 1),
                ConvDenoiser(x0.shape[2], n_cond, hidden, sched, seed=cfg.seed * 2 + 2))
    net_b, net_f = (n.copy() for n in nets)
    c = prior.c
    rng = StreamKey(cfg.seed, (0, 0, "X", "aux", 0)).generator()
    probes = probe_points(cfg, sched.T)
    n_frames = x0.shape[1]
    trace = []

    def record(step):
        lb, lf = probe_loss(net_b, net_f, x0, cond, prior, masks, sched, probes, c, cfg.objective, cfg.weighting)
        trace.append((step, coeff_loss, lb, lf, total_loss(coeff_loss, [lb], [lf])))

    record(0)
    for step in range(1, cfg.steps + 1):
        t = int(rng.integers(1, sched.T + 1))
        draw = prior.draw(masks, step, x0.shape[2])
        xs, cs = x0, cond
        if cfg.objective == "direct" and cfg.frames_per_step < n_frames:
            # direct per-frame terms are independent, so a frame subset is an unbiased minibatch
            fr = np.sort(rng.choice(n_frames, size=cfg.frames_per_step, replace=False))
            draw, xs = select_frames(draw, fr), x0[:, fr]
            cs = None if cond is None else cond[:, fr]
        _, _, gb, gf = denoiser_loss(net_b, net_f, xs, cs, draw, t, sched, c, cfg.objective, True, cfg.weighting)
        for net, grad in ((net_b, gb), (net_f, gf)):
            for k in net.PARAM_NAMES:
                net.params[k] = net.params[k] - cfg.learning_rate * grad[k]
        if step % cfg.eval_every == 0 or step == cfg.steps:
            record(step)
            LOG.debug("train step %d: L %.4g", step, trace[-1][4])
    return net_b, net_f, trace
