"""Command-line entry point: ``noisectl <subcommand> [options]``.

Every subcommand writes into a run directory (``--out``) and finishes by
writing ``manifest.txt``, one ``sha256  path`` line per artifact.
Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import os
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from noisectl._parallel import set_threads
from noisectl.collab import CollabParams, shared_next
from noisectl.collab_oracle import oracle_shared_next
from noisectl.decompose import CHANNELS, DecompParams, MaskVolume, SceneNoise
from noisectl.diffusion import ConvDenoiser
from noisectl.estimators import JointDenoiser, NoiseController
from noisectl.exceptions import ConfigError, NoiseCtlError
from noisectl.metrics import (MIN_ELEMENTS, ablation_table, consistency_report, median_report, moment_suite)
from noisectl.prior import MODES, NoisePrior
from noisectl.scene import (SCENE_KEYS, SceneDataset, SceneSpec, build_dataset, parse_kv, scene_from_blocks,
                            scene_to_text, view_strip, write_ppm)
from noisectl.tensor import load_bundle, load_tensor, save_bundle, save_tensor
from noisectl.train import write_trace_csv

LOG = logging.getLogger("noisectl")

SUBCOMMANDS = ("synth", "sample-noise", "fit-collab", "train", "generate", "eval", "ablate", "selftest")


# --- configuration ----------------------------------------------------------


@dataclass
class RunConfig:
    seed: int = 0
    threads: int | None = None
    eta: float = 1.0
    lam: float = 1.0
    window_k: int = 5
    mode: str = "full"
    renormalize: bool = False
    collab_lr: float = 1e-3
    collab_steps: int = 2000
    batch_size: int = 16
    grid: tuple = (8, 8)
    T: int = 100
    hidden: int = 16
    lr: float = 1e-3
    steps: int = 5000
    frames_per_step: int = 1
    objective: str = "direct"
    weighting: str = "x0"
    eval_every: int = 500
    scene: SceneSpec = field(default_factory=SceneSpec)

    @property
    def frames(self) -> int:
        return self.scene.n_frames

    def validate(self) -> "RunConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.seed >= 0, "seed must be >= 0")
        need(self.threads is None or self.threads >= 1, "threads must be >= 1")
        need(self.eta > 0 and self.lam > 0, "eta and lambda must be positive")
        need(0 <= self.window_k <= self.frames, f"window_k must lie in [0, frames={self.frames}]")
        need(self.mode in MODES, f"mode must be one of {', '.join(MODES)}")
        need(self.collab_lr > 0 and self.lr > 0, "learning rates must be positive")
        need(self.collab_steps >= 0 and self.steps >= 0, "step counts must be >= 0")
        need(self.batch_size >= 1 and all(g >= 1 for g in self.grid), "batch size and grid must be positive")
        need(self.T >= 1 and self.hidden >= 1, "T and hidden must be positive")
        need(1 <= self.frames_per_step <= self.frames, "frames_per_step must lie in [1, frames]")
        need(self.objective in ("direct", "collab"), "objective must be direct or collab")
        need(self.weighting in ("x0", "none"), "weighting must be x0 or none")
        need(self.eval_every >= 1, "eval_every must be >= 1")
        self.scene.check_pool()
        return self

    def controller(self, **overrides) -> NoiseController:
        kw = dict(eta=self.eta, lam=self.lam, window_k=self.window_k, n_frames=self.frames,
                  n_views=self.scene.n_views, mode=self.mode, renormalize=self.renormalize,
                  learning_rate=self.collab_lr, n_steps=self.collab_steps, batch_size=self.batch_size,
                  grid=self.grid, random_state=self.seed)
        kw.update(overrides)
        return NoiseController(**kw)

    def denoiser(self) -> JointDenoiser:
        return JointDenoiser(T=self.T, hidden=self.hidden, learning_rate=self.lr, n_steps=self.steps,
                             frames_per_step=self.frames_per_step, objective=self.objective,
                             weighting=self.weighting, eval_every=self.eval_every, random_state=self.seed)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            if f.name == "scene":
                continue
            value = getattr(self, f.name)
            if f.name == "grid":
                value = ",".join(str(g) for g in value)
            lines.append(f"{f.name} = {value}")
        return "[run]\n" + "\n".join(lines) + "\n\n" + scene_to_text(self.scene)


# config-file keys per section; values are (field, parser)
def _bool(v):
    low = str(v).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(v)


def _grid(v):
    parts = tuple(int(x) for x in str(v).replace(" ", "").split(","))
    if len(parts) != 2:
        raise ValueError(v)
    return parts


RUN_KEYS = {"seed": ("seed", int), "threads": ("threads", int)}
NOISE_KEYS = {
    "eta": ("eta", float), "lambda": ("lam", float), "lam": ("lam", float), "window_k": ("window_k", int),
    "k": ("window_k", int), "mode": ("mode", str), "renormalize": ("renormalize", _bool),
    "learning_rate": ("collab_lr", float), "steps": ("collab_steps", int), "batch_size": ("batch_size", int),
    "grid": ("grid", _grid),
}
TRAIN_KEYS = {
    "t": ("T", int), "hidden": ("hidden", int), "learning_rate": ("lr", float), "steps": ("steps", int),
    "frames_per_step": ("frames_per_step", int), "objective": ("objective", str),
    "weighting": ("weighting", str), "eval_every": ("eval_every", int),
}
SECTIONS = {"": RUN_KEYS, "run": RUN_KEYS, "noise": NOISE_KEYS, "train": TRAIN_KEYS}


def _apply(cfg: RunConfig, table, items, section):
    for key, value in items.items():
        if key not in table:
            if section in ("", "run") and key in SCENE_KEYS:
                continue  # scene keys may sit at top level
            raise ConfigError(f"unknown key {key!r} in [{section or 'top level'}]")
        name, parse = table[key]
        try:
            setattr(cfg, name, parse(value))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from exc


def load_config(path=None, args=None) -> RunConfig:
    """Merge a config file and command-line overrides, then validate."""
    cfg = RunConfig()
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        blocks = parse_kv(text)
        for section, items in blocks:
            if section in SECTIONS:
                _apply(cfg, SECTIONS[section], items, section)
            elif section not in ("scene", "object"):
                raise ConfigError(f"unknown section [{section}]")
        cfg.scene = scene_from_blocks(blocks)
    if args is not None:
        for flag, name in (("seed", "seed"), ("threads", "threads"), ("eta", "eta"), ("lam", "lam"),
                           ("window_k", "window_k"), ("mode", "mode"), ("steps", "steps")):
            value = getattr(args, flag, None)
            if value is not None:
                setattr(cfg, name, value)
        if getattr(args, "frames", None) is not None:
            cfg.scene = replace(cfg.scene, n_frames=args.frames)
    return cfg.validate()


# --- run directories ------------------------------------------------------------


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunDir:
    """Collects artifacts and writes the manifest last."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, rel) -> Path:
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        if rel not in self.files:
            self.files.append(rel)
        return p

    def write_text(self, rel, text):
        self.path(rel).write_text(text, encoding="utf-8", newline="\n")

    def finish(self):
        lines = [f"{sha256_file(self.root / rel)}  {rel}" for rel in sorted(self.files)]
        (self.root / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_manifest(root) -> dict:
    out = {}
    for line in Path(root, "manifest.txt").read_text(encoding="utf-8").splitlines():
        digest, _, rel = line.partition("  ")
        out[rel] = digest
    return out


def _record_inputs(run: RunDir, cfg: RunConfig, command: str, inputs: dict):
    text = f"command = {command}\n"
    for name, path in sorted(inputs.items()):
        text += f"input.{name} = {sha256_file(path)}\n"
    run.write_text("run.txt", text + "\n" + cfg.to_text())


def _write_strips(run: RunDir, video, prefix):
    video = np.asarray(video)
    for n in range(video.shape[1]):
        write_ppm(run.path(f"{prefix}/frame_{n + 1:02d}.ppm"), np.clip(view_strip(video[:, n]), 0.0, 1.0))


# --- inputs ------------------------------------------------------------------


def dataset_for(cfg: RunConfig, data_dir, inputs) -> SceneDataset:
    """Load a ``synth`` output directory, or render the configured scene."""
    if data_dir is None:
        return build_dataset(cfg.scene)
    d = Path(data_dir)
    try:
        spec = scene_from_blocks(parse_kv((d / "scene.cfg").read_text(encoding="utf-8")))
        latents = load_tensor(d / "latents.nct")
        masks = MaskVolume(load_tensor(d / "masks.nct"))
        images = load_tensor(d / "images.nct")
    except OSError as exc:
        raise ConfigError(f"{d} is not a synth output directory: {exc}") from exc
    if spec.n_frames != cfg.frames:
        raise ConfigError(f"data has {spec.n_frames} frames, run is configured for {cfg.frames}")
    inputs["latents"] = d / "latents.nct"
    inputs["masks"] = d / "masks.nct"
    return SceneDataset(latents, masks, spec, images)


def controller_for(cfg: RunConfig, collab_path, inputs, fit_if_missing=False) -> NoiseController:
    ctl = cfg.controller()
    if collab_path is not None:
        inputs["collab"] = Path(collab_path)
        try:
            params = CollabParams.load(collab_path)
        except OSError as exc:
            raise ConfigError(f"cannot read collaboration params {collab_path}: {exc}") from exc
        if params.K != cfg.window_k:
            raise ConfigError(f"{collab_path} has K={params.K}, run is configured for K={cfg.window_k}")
        return ctl.set_collab(params)
    if fit_if_missing:
        return ctl.fit()
    return ctl.set_collab(CollabParams.init(cfg.frames, cfg.window_k, cfg.scene.n_views))


def denoiser_for(cfg: RunConfig, model_dir, data: SceneDataset, inputs) -> JointDenoiser:
    d = Path(model_dir)
    try:
        net_b = ConvDenoiser.load(d / "denoiser_b.nctb")
        net_f = ConvDenoiser.load(d / "denoiser_f.nctb")
    except OSError as exc:
        raise ConfigError(f"{d} does not hold trained denoisers: {exc}") from exc
    inputs["denoiser_b"] = d / "denoiser_b.nctb"
    inputs["denoiser_f"] = d / "denoiser_f.nctb"
    jd = cfg.denoiser()
    jd.use_conditioning = net_b.cond_channels > 0
    return jd.set_networks(net_b, net_f, data.spec, data.masks)


def collaboration_note(cfg: RunConfig) -> str:
    if cfg.window_k == 0 or cfg.mode in ("nocollab", "baseline"):
        return "collaboration disabled"
    return ""


# --- subcommands --------------------------------------------------------------


def cmd_synth(args, cfg, run):
    data = build_dataset(cfg.scene)
    save_tensor(run.path("latents.nct"), data.latents)
    save_tensor(run.path("masks.nct"), data.masks.mask_b)
    save_tensor(run.path("images.nct"), data.images)
    run.write_text("scene.cfg", scene_to_text(cfg.scene))
    _write_strips(run, data.images, "frames")
    _record_inputs(run, cfg, "synth", {})


def _noise_bundle(draws):
    tensors = {}
    for d in CHANNELS:
        tensors[f"shared_{d}"] = np.stack([x.noise.shared[d] for x in draws])
        tensors[f"residual_{d}"] = np.stack([x.noise.residual[d] for x in draws])
    tensors["masked_B"] = np.stack([x.masked_b for x in draws])
    tensors["masked_F"] = np.stack([x.masked_f for x in draws])
    tensors["composed"] = np.stack([x.composed for x in draws])
    tensors["masks"] = np.stack([x.masks.mask_b for x in draws])
    return tensors


def cmd_sample_noise(args, cfg, run):
    inputs = {}
    data = dataset_for(cfg, args.data, inputs)
    ctl = controller_for(cfg, args.collab, inputs)
    draws = [ctl.sample(data.masks, draw=d, channels=cfg.scene.channels) for d in range(args.draws)]
    header = {"kind": "noise", "mode": cfg.mode, "K": cfg.window_k, "draws": args.draws}
    save_bundle(run.path("noise.nctb"), _noise_bundle(draws), header)
    save_tensor(run.path("noise.nct"), draws[0].composed)
    _record_inputs(run, cfg, "sample-noise", inputs)


def cmd_fit_collab(args, cfg, run):
    ctl = cfg.controller().fit()
    ctl.collab_.save(run.path("collab.nctb"))
    rows = [(s, lc, lb, lf, lc) for s, lc, lb, lf in ctl.loss_trace_]
    write_trace_csv(run.path("trace.csv"), rows)
    _record_inputs(run, cfg, "fit-collab", {})


def cmd_train(args, cfg, run):
    inputs = {}
    data = dataset_for(cfg, args.data, inputs)
    ctl = controller_for(cfg, args.collab, inputs)
    jd = cfg.denoiser().fit(data, noise=ctl)
    jd.net_b_.save(run.path("denoiser_b.nctb"))
    jd.net_f_.save(run.path("denoiser_f.nctb"))
    write_trace_csv(run.path("trace.csv"), jd.loss_trace_)
    _record_inputs(run, cfg, "train", inputs)


def cmd_generate(args, cfg, run):
    inputs = {}
    data = dataset_for(cfg, args.data, inputs)
    ctl = controller_for(cfg, args.collab, inputs)
    jd = denoiser_for(cfg, args.model, data, inputs)
    video = jd.generate(ctl, channels=cfg.scene.channels)
    save_tensor(run.path("video.nct"), video)
    _write_strips(run, np.clip(video, 0.0, 1.0), "frames")
    _record_inputs(run, cfg, "generate", inputs)


def _read_run_settings(src: Path) -> dict:
    try:
        blocks = parse_kv((src / "run.txt").read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{src} is not a noisectl run directory: {exc}") from exc
    out = {}
    for section, items in blocks:
        if section in ("", "run"):
            out.update(items)
    return out


def cmd_eval(args, cfg, run):
    src = Path(args.input)
    settings = _read_run_settings(src)
    note = ""
    if int(settings.get("window_k", cfg.window_k)) == 0 or settings.get("mode") in ("nocollab", "baseline"):
        note = "collaboration disabled"
    inputs = {}
    rows = []
    summary = [f"# Evaluation of `{settings.get('command', 'run')}` output", ""]
    if note:
        summary += [f"Noise prior: **{note}** (mode `{settings.get('mode')}`, K = {settings.get('window_k')}).", ""]
    else:
        summary += [f"Noise prior: mode `{settings.get('mode')}`, K = {settings.get('window_k')}.", ""]
    if (src / "noise.nctb").exists():
        inputs["noise"] = src / "noise.nctb"
        tensors, _ = load_bundle(src / "noise.nctb")
        d = tensors["composed"].shape[0]
        # draws stack along the view axis so moments pool over all of them
        cat = {k: np.concatenate(list(v)) for k, v in tensors.items()}
        noise = SceneNoise(shared={c: cat[f"shared_{c}"] for c in CHANNELS},
                           residual={c: cat[f"residual_{c}"] for c in CHANNELS})
        p = DecompParams(float(settings.get("eta", 1.0)), float(settings.get("lam", 1.0)))
        n_first = cat["composed"][:, 0].size
        if n_first >= MIN_ELEMENTS:
            for r in moment_suite(noise, p, cat["masks"]):
                rows.append(("moment", r.name, r.statistic, repr(r.value), repr(r.target), repr(r.bound),
                             "pass" if r.passed else "fail"))
            summary.append(f"Moment tests over {d} draws: {sum(r[-1] == 'pass' for r in rows)}/{len(rows)} pass.")
        else:
            summary.append(f"Moment tests skipped: {n_first} frame-1 elements, need {MIN_ELEMENTS} "
                           "(raise `sample-noise --draws`).")
    if (src / "video.nct").exists():
        inputs["video"] = src / "video.nct"
        data = dataset_for(cfg, args.data, inputs)
        video = load_tensor(src / "video.nct")
        rep = consistency_report(video, data.spec, reference=data.latents, notes=note)
        mse = float(np.mean((video - data.latents) ** 2))
        rows += [("video", "temporal_consistency", "score", repr(rep.temporal_score), "", "", ""),
                 ("video", "crossview_consistency", "score", repr(rep.crossview_score), "", "", ""),
                 ("video", "mse_to_latents", "score", repr(mse), "", "", "")]
        summary += ["", "| score | value |", "|---|---|",
                    f"| temporal_consistency | {rep.temporal_score:.6g} |",
                    f"| crossview_consistency | {rep.crossview_score:.6g} |",
                    f"| mse_to_latents | {mse:.6g} |", ""]
        for n in range(video.shape[1]):
            rel = f"frames/frame_{n + 1:02d}.ppm"
            write_ppm(run.path(rel), np.clip(view_strip(video[:, n]), 0.0, 1.0))
            summary.append(f"![frame {n + 1}]({rel})")
    if not inputs:
        raise ConfigError(f"{src} holds neither noise.nctb nor video.nct")
    with open(run.path("report.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("kind", "name", "statistic", "value", "target", "bound", "verdict"))
        w.writerows(rows)
    run.write_text("summary.md", "\n".join(summary) + "\n")
    _record_inputs(run, cfg, "eval", inputs)


def cmd_ablate(args, cfg, run):
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    bad = [m for m in modes if m not in MODES]
    if bad or len(modes) < 2:
        raise ConfigError(f"--modes needs at least two of {', '.join(MODES)}; got {args.modes!r}")
    if args.seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    inputs = {}
    data = dataset_for(cfg, args.data, inputs)
    ctl = controller_for(cfg, args.collab, inputs, fit_if_missing=cfg.window_k > 0)
    if args.model is not None:
        jd = denoiser_for(cfg, args.model, data, inputs)
    else:
        jd = cfg.denoiser().fit(data, noise=ctl)
    table = []
    for mode in modes:
        note = collaboration_note(replace(cfg, mode=mode))
        reports = []
        for s in range(args.seeds):
            prior = NoisePrior(ctl.decomp_, ctl.collab_, mode, cfg.seed + s, cfg.renormalize)
            video = jd.generate(prior, channels=cfg.scene.channels)
            reports.append(consistency_report(video, data.spec, mode, data.latents, note))
            if s == 0:
                _write_strips(run, np.clip(video, 0.0, 1.0), f"strips/{mode}")
        table.append((mode, median_report(reports, mode)))
    csv_text, md = ablation_table(table)
    run.write_text("ablation.csv", csv_text)
    md = f"# Ablation over {args.seeds} seed(s), median scores\n\n" + md + "\n"
    md += "\n".join(f"![{m} frame 1](strips/{m}/frame_01.ppm)" for m in modes) + "\n"
    run.write_text("ablation.md", md)
    _record_inputs(run, cfg, "ablate", inputs)


def selftest_results(seed=0, instances=20):
    """Oracle equivalence of the collaboration step plus the moment suite."""
    rows = []
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        c = CollabParams(rng.normal(size=(16, 2, 6, 6)), rng.normal(size=(5, 2, 2, 6)), 5)
        n = int(rng.integers(1, 17))
        start = max(n - 5 + 1, 1)
        hist = rng.normal(size=(n - start + 1, 2, 6, 1, 4, 4))
        fast = shared_next(hist, c, n)
        slow = oracle_shared_next(hist, c.S, c.I, c.K, n)
        worst = max(worst, float(np.max(np.abs(fast - slow))))
    rows.append(("oracle_equivalence", "max_abs_error", worst, 0.0, 1e-10, worst <= 1e-10))
    ctl = NoiseController(n_frames=2, window_k=1, n_steps=0, random_state=seed).fit()
    masks = MaskVolume((rng.random((6, 2, 1, 96, 96)) < 0.6).astype(np.float64))
    draw = ctl.sample(masks, channels=2)
    for r in moment_suite(draw.noise, ctl.decomp_, masks):
        rows.append((r.name, r.statistic, r.value, r.target, r.bound, r.passed))
    return rows


def cmd_selftest(args, cfg, run):
    rows = selftest_results(cfg.seed)
    with open(run.path("selftest.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("test", "statistic", "value", "target", "bound", "verdict"))
        for name, stat, value, target, bound, ok in rows:
            w.writerow((name, stat, repr(float(value)), repr(float(target)), repr(float(bound)),
                        "pass" if ok else "fail"))
    failed = [r for r in rows if not r[-1]]
    for name, stat, value, _, bound, ok in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name} {stat} = {value:.3g} (bound {bound:.3g})")
    return 1 if failed else 0


HANDLERS = {
    "synth": cmd_synth, "sample-noise": cmd_sample_noise, "fit-collab": cmd_fit_collab, "train": cmd_train,
    "generate": cmd_generate, "eval": cmd_eval, "ablate": cmd_ablate, "selftest": cmd_selftest,
}


# --- argument parsing ---------------------------------------------------------------


def _common(p):
    p.add_argument("--config", help="key = value config file with [run] [noise] [train] [scene] [object] sections")
    p.add_argument("--out", help="run directory (default: run-<subcommand>)")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker threads (fallback: $NOISECTL_THREADS)")
    p.add_argument("--eta", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--window-k", "--K", dest="window_k", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisectl", description="Structured multi-view noise priors and tiny joint denoisers.")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    sub.required = True
    helps = {
        "synth": "render the hexview scene to latents, masks and PPM frames",
        "sample-noise": "draw structured initial noise for the scene masks",
        "fit-collab": "fit the collaboration matrices",
        "train": "train the background/foreground denoiser pair",
        "generate": "reverse-sample a clip with trained denoisers",
        "eval": "score a sample-noise or generate run directory",
        "ablate": "compare noise modes on identical denoisers",
        "selftest": "oracle-equivalence and moment checks",
    }
    subs = {name: sub.add_parser(name, help=helps[name]) for name in SUBCOMMANDS}
    for p in subs.values():
        _common(p)
    for name in ("sample-noise", "train", "generate", "eval", "ablate"):
        subs[name].add_argument("--data", help="synth output directory (default: render the configured scene)")
    for name in ("sample-noise", "train", "generate", "ablate"):
        subs[name].add_argument("--collab", help="fitted collaboration params (.nctb)")
    for name in ("generate", "ablate"):
        subs[name].add_argument("--model", required=(name == "generate"), help="train output directory")
    subs["sample-noise"].add_argument("--draws", type=int, default=1)
    subs["train"].add_argument("--steps", type=int)
    subs["ablate"].add_argument("--steps", type=int)
    subs["eval"].add_argument("--in", dest="input", required=True, help="run directory to evaluate")
    subs["ablate"].add_argument("--modes", default="full,nocollab")
    subs["ablate"].add_argument("--seeds", type=int, default=3)
    return parser


def _env_threads():
    env = os.environ.get("NOISECTL_THREADS")
    if env is None:
        return None
    try:
        n = int(env)
    except ValueError as exc:
        raise ConfigError(f"NOISECTL_THREADS must be an integer, got {env!r}") from exc
    if n < 1:
        raise ConfigError("NOISECTL_THREADS must be >= 1")
    return n


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, args)
        if getattr(args, "draws", 1) < 1:
            raise ConfigError("--draws must be >= 1")
        set_threads(cfg.threads if cfg.threads is not None else _env_threads())
        out = RunDir(args.out or f"run-{args.command}")
    except ConfigError as exc:
        print(f"noisectl: config error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        code = HANDLERS[args.command](args, cfg, out) or 0
        out.finish()
    except ConfigError as exc:
        print(f"noisectl: config error: {exc}", file=sys.stderr)
        return 2
    except (NoiseCtlError, OSError, ValueError) as exc:
        print(f"noisectl: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    LOG.info("%s finished in %.1fs", args.command, time.perf_counter() - t0)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
