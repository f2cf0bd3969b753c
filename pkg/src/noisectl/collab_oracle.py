"""Reference implementation of the shared-component recursion.

Plain nested loops over target view, target channel, window slot, source
channel, source view and pixel. Deliberately shares nothing with
``noisectl.collab`` so it can serve as an independent check.
"""

import numpy as np


def oracle_shared_next(history, S, I, K, n):
    """Loop evaluation of the frame ``n + 1`` shared components.

    ``history[j]`` is frame ``n - len(history) + 1 + j`` with layout
    ``[2, V, C, H, W]``; ``S`` is ``[N, 2, V, V]`` and ``I`` is ``[K, 2, 2, V]``.
    """
    if K <= 0:
        raise ValueError("collaboration disabled")
    hist = np.asarray(history, dtype=np.float64)
    if len(hist) == 0:
        raise RuntimeError("empty history")
    first = n - K + 1
    if first < 1:
        first = 1
    n_channels, n_views = hist.shape[1], hist.shape[2]
    pix_shape = hist.shape[3:]
    n_pix = 1
    for s in pix_shape:
        n_pix *= s
    offset = len(hist) - n  # history index of frame f is f - 1 + offset
    out = np.zeros((n_channels, n_views) + pix_shape)
    out_flat = out.reshape(n_channels, n_views, n_pix)
    for tgt_ch in range(n_channels):
        for p in range(n_views):
            for i in range(first, n + 1):
                slot = i - first
                frame = hist[i - 1 + offset].reshape(n_channels, n_views, n_pix)
                for src_ch in range(n_channels):
                    weight = I[slot][src_ch][tgt_ch][p]
                    for q in range(n_views):
                        s = S[i - 1][src_ch][p][q]
                        for x in range(n_pix):
                            out_flat[tgt_ch][p][x] += weight * (s * frame[src_ch][q][x])
    return out
