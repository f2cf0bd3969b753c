"""Training objectives and a finite-difference gradient checker.

Every loss here returns its value and, on request, the analytic gradient.
"""

from __future__ import annotations

import numpy as np

from noisectl.collab import CollabParams, window_start
from noisectl.decompose import CHANNELS, DecompParams
from noisectl.exceptions import ParameterError, ShapeError, StateError


def coefficient_targets(p: DecompParams, n_frames: int, n_views: int = 6) -> np.ndarray:
    """Target planes ``[2, N, V]`` filled with the shared variances."""
    out = np.empty((2, n_frames, n_views))
    out[0] = p.shared_var_b
    out[1] = p.shared_var_f
    return out


def collaborated_coefficients(c: CollabParams, histories) -> tuple[np.ndarray, tuple]:
    """Empirical second moments ``[2, N, V]`` of the collaborated shared
    components, one per predicted frame ``n + 1`` for ``n = 1..N``.

    ``histories`` is ``[batch, N, 2, V, ...]`` of full scene noises; the
    moment averages over batch and spatial positions together.
    """
    h = np.asarray(histories, dtype=np.float64)
    if h.ndim < 4 or h.shape[0] == 0:
        raise StateError("coefficient loss needs a non-empty batch of histories")
    b, n_frames, _, v = h.shape[:4]
    if n_frames != c.n_frames or v != c.n_views:
        raise ShapeError(f"histories {h.shape[:4]} do not match params (N={c.n_frames}, V={c.n_views})")
    # [N, 2, V, batch * pixels]
    if b == 1:
        flat = h.reshape(n_frames, 2, v, -1)
    else:
        flat = np.moveaxis(h.reshape(b, n_frames, 2, v, -1), 0, 3).reshape(n_frames, 2, v, -1)
    coeffs = np.zeros((2, n_frames, v))
    if c.K == 0:
        return coeffs, (flat, None, [])
    mixed = np.matmul(c.S, flat)  # S_i applied once per history frame
    outs = []
    for n in range(1, n_frames + 1):
        start = window_start(n, c.K)
        out = np.zeros((2, v, flat.shape[-1]))
        for k, i in enumerate(range(start, n + 1)):
            for d in range(2):
                out += c.I[k, d][:, :, None] * mixed[i - 1, d][None]
        coeffs[:, n - 1] = np.mean(out * out, axis=-1)
        outs.append(out)
    return coeffs, (flat, mixed, outs)


def coefficient_loss(c: CollabParams, p: DecompParams, histories, return_grad=False):
    """L1 distance between target planes and collaborated second moments.

    Returns ``(total, (background, foreground))`` or, with ``return_grad``,
    ``(total, (background, foreground), grad)`` where ``grad`` is a
    ``CollabParams`` holding dL/dS and dL/dI.
    """
    coeffs, (flat, mixed, outs) = collaborated_coefficients(c, histories)
    targets = coefficient_targets(p, c.n_frames, c.n_views)
    diff = targets - coeffs
    per_channel = np.abs(diff).sum(axis=(1, 2))
    total = float(per_channel.sum())
    parts = (float(per_channel[0]), float(per_channel[1]))
    if not return_grad:
        return total, parts

    dI = np.zeros_like(c.I)
    if c.K == 0:
        return total, parts, CollabParams(np.zeros_like(c.S), dI, c.K)
    dmixed = np.zeros_like(mixed)
    npix = flat.shape[-1]
    for n, out in enumerate(outs, start=1):
        start = window_start(n, c.K)
        g = np.sign(-diff[:, n - 1])  # dL/dcoeff; 0 exactly at a kink
        gout = (2.0 / npix) * g[:, :, None] * out
        for k, i in enumerate(range(start, n + 1)):
            for d in range(2):
                dI[k, d] += np.einsum("Dpx,px->Dp", gout, mixed[i - 1, d])
                dmixed[i - 1, d] += np.einsum("Dp,Dpx->px", c.I[k, d], gout)
    dS = np.matmul(dmixed, np.swapaxes(flat, -1, -2))
    return total, parts, CollabParams(dS, dI, c.K)


def rolled_coefficient_loss(c: CollabParams, p: DecompParams, first, residuals, return_grad=False):
    """Coefficient loss on histories rolled under ``c`` itself.

    ``first`` is the frame-1 shared draw ``[2, V, ...]`` and ``residuals``
    ``[N, 2, V, ...]``. Unlike :func:`coefficient_loss`, the gradient also
    flows through the recursion that produced the histories.
    """
    first = np.asarray(first, dtype=np.float64)
    res = np.asarray(residuals, dtype=np.float64)
    n_frames, v = res.shape[0], res.shape[2]
    if n_frames != c.n_frames or c.K == 0:
        raise ParameterError("rolled loss needs K > 0 and one S per frame")
    npix = int(np.prod(res.shape[3:]))
    res = res.reshape(n_frames, 2, v, npix)
    full = np.empty_like(res)
    mixed = np.empty_like(res)
    outs = np.empty((n_frames, 2, v, npix))
    full[0] = first.reshape(2, v, npix) + res[0]
    for n in range(1, n_frames + 1):
        mixed[n - 1] = np.matmul(c.S[n - 1], full[n - 1])
        start = window_start(n, c.K)
        out = np.zeros((2, v, npix))
        for k, i in enumerate(range(start, n + 1)):
            for d in range(2):
                out += c.I[k, d][:, :, None] * mixed[i - 1, d][None]
        outs[n - 1] = out
        if n < n_frames:
            full[n] = out + res[n]
    coeffs = np.mean(outs * outs, axis=-1)  # [N, 2, V]
    targets = np.moveaxis(coefficient_targets(p, n_frames, v), 0, 1)
    diff = targets - coeffs
    per_channel = np.abs(diff).sum(axis=(0, 2))
    total = float(per_channel.sum())
    parts = (float(per_channel[0]), float(per_channel[1]))
    if not return_grad:
        return total, parts

    dI = np.zeros_like(c.I)
    dmixed = np.zeros_like(mixed)
    for n in range(n_frames, 0, -1):
        gout = (2.0 / npix) * np.sign(-diff[n - 1])[:, :, None] * outs[n - 1]
        if n < n_frames:
            # frame n + 1 = out_n + residual; its consumers are all later
            gout += np.matmul(np.swapaxes(c.S[n], -1, -2), dmixed[n])
        start = window_start(n, c.K)
        for k, i in enumerate(range(start, n + 1)):
            for d in range(2):
                dI[k, d] += np.einsum("Dpx,px->Dp", gout, mixed[i - 1, d])
                dmixed[i - 1, d] += np.einsum("Dp,Dpx->px", c.I[k, d], gout)
    dS = np.matmul(dmixed, np.swapaxes(full, -1, -2))
    return total, parts, CollabParams(dS, dI, c.K)


def _frame_estimate(pred, c: CollabParams, n: int, ch: int):
    """Collaborated estimate of frame ``n`` from masked predictions of the
    frames ``max(n - K, 1) .. n - 1``; ``pred`` is ``[V, N, C, H, W]``."""
    lo = max(n - c.K, 1)
    v = pred.shape[0]
    est = np.zeros((v,) + pred.shape[2:])
    terms = []
    for i in range(lo, n):
        slot = i - lo
        frame = pred[:, i - 1].reshape(v, -1)
        mixed = c.S[i - 1, ch] @ frame
        w = c.I[slot, ch, ch][:, None]
        est += (w * mixed).reshape(est.shape)
        terms.append((i, slot))
    return est, terms


def scene_noise_loss(mask, gt, pred, c: CollabParams, n: int, channel="B", return_grad=False):
    """Masked L2 distance for one scene channel at frame ``n``.

    ``mask`` is the channel's mask ``[V, N, 1, H, W]``, ``gt`` the masked
    ground-truth noise and ``pred`` the masked predicted noise, both
    ``[V, N, C, H, W]``. Frame 1 compares prediction to ground truth
    directly; later frames compare against the collaboration of earlier
    predictions. The gradient is taken with respect to ``pred``.
    """
    if n < 1:
        raise ParameterError("frames are numbered from 1")
    mask = np.asarray(mask, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if gt.shape != pred.shape:
        raise ShapeError(f"gt {gt.shape} and pred {pred.shape} differ")
    if n > gt.shape[1]:
        raise StateError(f"frame {n} has no ground truth (only {gt.shape[1]} frames)")
    ch = CHANNELS.index(channel)
    m = mask[:, n - 1]
    if n == 1:
        est, terms = pred[:, 0], None
    else:
        est, terms = _frame_estimate(pred, c, n, ch)
    r = m * (gt[:, n - 1] - est)
    loss = float(np.sqrt(np.sum(r * r)))
    if not return_grad:
        return loss
    grad = np.zeros_like(pred)
    if loss == 0.0:
        return loss, grad
    dest = -(m * r) / loss
    if n == 1:
        grad[:, 0] = dest
        return loss, grad
    v = pred.shape[0]
    flat = dest.reshape(v, -1)
    for i, slot in terms:
        w = c.I[slot, ch, ch][:, None]
        grad[:, i - 1] += (c.S[i - 1, ch].T @ (w * flat)).reshape(grad.shape[:1] + grad.shape[2:])
    return loss, grad


def direct_frame_loss(mask, gt, pred, n: int, return_grad=False):
    """``||M_n * (gt_n - pred_n)||_2`` for any frame; the frame-1 form of
    :func:`scene_noise_loss` applied frame by frame."""
    m = np.asarray(mask)[:, n - 1]
    r = m * (np.asarray(gt)[:, n - 1] - np.asarray(pred)[:, n - 1])
    loss = float(np.sqrt(np.sum(r * r)))
    if not return_grad:
        return loss
    grad = np.zeros_like(pred, dtype=np.float64)
    if loss > 0:
        grad[:, n - 1] = -(m * r) / loss
    return loss, grad


def total_loss(coeff_loss: float, background_terms, foreground_terms) -> float:
    return float(coeff_loss) + float(np.sum(background_terms)) + float(np.sum(foreground_terms))


def grad_check(loss_fn, grad_fn, x, probes: int, step: float = 1e-5, seed: int = 0, coords=None) -> float:
    """Largest relative error between ``grad_fn(x)`` and central differences
    of ``loss_fn`` on ``probes`` random coordinates of the flat vector ``x``."""
    x = np.array(x, dtype=np.float64).ravel()
    analytic = np.asarray(grad_fn(x), dtype=np.float64).ravel()
    if coords is None:
        rng = np.random.default_rng(seed)
        coords = rng.choice(x.size, size=min(probes, x.size), replace=False)
    worst = 0.0
    for j in coords:
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        numeric = (loss_fn(xp) - loss_fn(xm)) / (2 * step)
        a = analytic[j]
        scale = max(abs(a), abs(numeric))
        # absolute floor keeps exactly-zero coordinates from dividing by zero
        err = abs(a - numeric) / max(scale, 1e-6)
        worst = max(worst, err)
    return worst
