"""Moment tests on noise volumes and consistency scores on latent videos."""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field

import numpy as np

from noisectl.decompose import CHANNELS, DecompParams, SceneNoise, compose_initial
from noisectl.exceptions import ParameterError, ShapeError
from noisectl.scene import SceneSpec, build_dataset, latent_object_cover
from noisectl.tensor import moments

MIN_ELEMENTS = 100_000


@dataclass(frozen=True)
class MomentResult:
    name: str
    statistic: str
    value: float
    target: float
    bound: float

    @property
    def passed(self) -> bool:
        return abs(self.value - self.target) <= self.bound


@dataclass
class ConsistencyReport:
    temporal_score: float
    crossview_score: float
    moment_results: list = field(default_factory=list)
    label: str = ""
    notes: str = ""

    def __post_init__(self):
        if self.temporal_score < 0 or self.crossview_score < 0:
            raise ParameterError("consistency scores are nonnegative")

    @property
    def moments_passed(self) -> int:
        return sum(r.passed for r in self.moment_results)


def moment_check(x, name: str, variance: float, k: float = 6.0, mean: float = 0.0) -> list[MomentResult]:
    """Mean, variance and excess kurtosis of ``x`` against a Gaussian with
    the given moments. Bounds are ``k`` standard errors."""
    x = np.asarray(x, dtype=np.float64).ravel()
    n = x.size
    if n < MIN_ELEMENTS:
        raise ParameterError(f"{name}: moment tests need >= {MIN_ELEMENTS} elements, got {n}")
    if k <= 0:
        raise ParameterError("bound multiplier must be positive")
    m, v, kurt = moments(x)
    return [
        MomentResult(name, "mean", m, mean, k * np.sqrt(variance / n)),
        MomentResult(name, "variance", v, variance, k * variance * np.sqrt(2.0 / (n - 1))),
        MomentResult(name, "kurtosis", kurt, 0.0, k * np.sqrt(24.0 / n)),
    ]


def moment_suite(noise: SceneNoise, p: DecompParams, masks, k: float = 6.0) -> list[MomentResult]:
    """Prescribed-moment tests on one noise clip.

    Frame-1 shared components, every residual and the composed frame-1
    noise have known laws; later shared components depend on the fitted
    collaboration and are not tested here.
    """
    results = []
    for d in CHANNELS:
        results += moment_check(noise.shared[d][:, 0], f"shared_{d}_frame1", p.shared_var(d), k)
        results += moment_check(noise.residual[d], f"residual_{d}", p.residual_var(d), k)
    composed = compose_initial(noise, masks)[2]
    results += moment_check(composed[:, 0], "composed_frame1", 1.0, k)
    return results


def _panorama(video) -> np.ndarray:
    """``[V, N, C, h, w]`` -> ``[N, C, h, V * w]`` in ring order."""
    v = np.asarray(video, dtype=np.float64)
    if v.ndim != 5:
        raise ShapeError(f"video must be [V, N, C, h, w], got {v.shape}")
    return np.concatenate(list(v), axis=-1)


def _check_video(video, spec: SceneSpec):
    h, w = spec.latent_hw
    shape = np.shape(video)
    if len(shape) != 5 or shape[0] != spec.n_views or shape[3:] != (h, w):
        raise ShapeError(f"video {shape} does not match the rig ({spec.n_views} views of {h}x{w})")
    if shape[1] > spec.n_frames:
        raise ShapeError(f"video has {shape[1]} frames, scene only {spec.n_frames}")


def temporal_consistency(video, spec: SceneSpec) -> float:
    """Mean squared change between consecutive frames after motion
    compensation.

    Latent pixels fully covered by one object in both frames are compared
    along that object's known displacement; pixels with no foreground in
    either frame are compared in place. Pixels partially covered or
    changing layer are skipped.
    """
    _check_video(video, spec)
    pano = _panorama(video)
    k = spec.pool
    total, count = 0.0, 0
    cover = [latent_object_cover(spec, n) for n in range(1, pano.shape[0] + 1)]
    for n in range(1, pano.shape[0]):
        prev, cur = pano[n - 1], pano[n]
        (full0, any0), (full1, any1) = cover[n - 1], cover[n]
        still = ~any0 & ~any1
        diff = cur[:, still] - prev[:, still]
        total += float(np.sum(diff * diff))
        count += diff.size
        for j, obj in enumerate(spec.objects):
            (x0, y0), (x1, y1) = obj.left_top(n), obj.left_top(n + 1)
            dy, dx = round((y1 - y0) / k), round((x1 - x0) / k)
            moved = np.roll(prev, (dy, dx), axis=(-2, -1))
            src = np.roll(full0[j], (dy, dx), axis=(0, 1))
            sel = src & full1[j]
            diff = cur[:, sel] - moved[:, sel]
            total += float(np.sum(diff * diff))
            count += diff.size
    if count == 0:
        raise ParameterError("no comparable pixels between consecutive frames")
    return total / count


def _seam_differences(video) -> np.ndarray:
    """Last column of each view minus first column of the next, ring-wise:
    ``[N, V, C, h]``."""
    v = np.asarray(video, dtype=np.float64)
    last = v[..., -1]  # [V, N, C, h]
    first = np.roll(v[..., 0], -1, axis=0)
    return np.moveaxis(last - first, 0, 1)


def crossview_consistency(video, spec: SceneSpec, reference=None) -> float:
    """Mean squared mismatch across the six sector boundaries.

    Adjacent boundary columns see neighbouring world columns, so each
    seam's difference is compared with the same difference in the
    rendered scene (``reference``, built from ``spec`` when omitted).
    """
    _check_video(video, spec)
    if reference is None:
        reference = build_dataset(spec).latents
    reference = np.asarray(reference, dtype=np.float64)[:, : np.shape(video)[1]]
    err = _seam_differences(video) - _seam_differences(reference)
    return float(np.mean(err * err))


def consistency_report(video, spec: SceneSpec, label: str = "", reference=None, notes: str = "") -> ConsistencyReport:
    return ConsistencyReport(
        temporal_score=temporal_consistency(video, spec),
        crossview_score=crossview_consistency(video, spec, reference),
        label=label,
        notes=notes,
    )


def median_report(reports, label: str = "") -> ConsistencyReport:
    """Per-score median over seeds."""
    reports = list(reports)
    if not reports:
        raise ParameterError("no reports to aggregate")
    notes = sorted({r.notes for r in reports if r.notes})
    return ConsistencyReport(
        temporal_score=statistics.median(r.temporal_score for r in reports),
        crossview_score=statistics.median(r.crossview_score for r in reports),
        label=label or reports[0].label,
        notes="; ".join(notes),
    )


TABLE_HEADER = ("mode", "temporal_consistency", "crossview_consistency", "moment_tests_passed", "notes")


def ablation_table(runs) -> tuple[str, str]:
    """CSV and Markdown renderings of named reports, one row per run.

    ``runs`` is a mapping or a sequence of ``(name, report)`` pairs.
    """
    rows = list(runs.items()) if isinstance(runs, dict) else list(runs)
    if len(rows) < 2:
        raise ParameterError(f"an ablation table needs at least two runs, got {len(rows)}")
    body = [
        (name, f"{r.temporal_score:.6g}", f"{r.crossview_score:.6g}",
         f"{r.moments_passed}/{len(r.moment_results)}", r.notes)
        for name, r in rows
    ]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_HEADER)
    w.writerows(body)
    md = ["| " + " | ".join(TABLE_HEADER) + " |", "|" + "---|" * len(TABLE_HEADER)]
    md += ["| " + " | ".join(row) + " |" for row in body]
    return buf.getvalue(), "\n".join(md) + "\n"
