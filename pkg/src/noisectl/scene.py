"""Synthetic six-view panoramic scenes with moving rectangles.

The world is a horizontal ring ``6 * view_w`` pixels wide and ``view_h``
pixels tall. View ``m`` (1-based) sees columns ``(m - 1) * view_w`` up to
``m * view_w``. Objects move with constant velocity and wrap around both
axes; later objects are drawn over earlier ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from noisectl._parallel import pmap
from noisectl.decompose import N_VIEWS, MaskVolume
from noisectl.exceptions import ConfigError, ParameterError


@dataclass(frozen=True)
class ObjectSpec:
    width: int
    height: int
    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0
    intensity: float = 0.9

    def left_top(self, frame: int) -> tuple[int, int]:
        return (int(math.floor(self.x + self.vx * (frame - 1))),
                int(math.floor(self.y + self.vy * (frame - 1))))


@dataclass(frozen=True)
class TextureTerm:
    amplitude: float
    cycles_x: float
    cycles_y: float
    phase: float


DEFAULT_TEXTURE = (
    TextureTerm(0.15, 1.0, 0.0, 0.3),
    TextureTerm(0.08, 2.0, 0.0, 1.9),
    TextureTerm(0.10, 0.0, 0.5, 0.0),
)

DEFAULT_OBJECTS = (
    ObjectSpec(12, 10, 40, 2, 4, 0, 0.9),
    ObjectSpec(10, 8, 160, 14, -2, 0, 0.9),
    ObjectSpec(14, 6, 270, 24, 6, 0, 0.9),
)


@dataclass(frozen=True)
class SceneSpec:
    n_frames: int = 16
    view_h: int = 32
    view_w: int = 56
    pool: int = 2
    channels: int = 1
    objects: tuple = DEFAULT_OBJECTS
    background: float = 0.45
    texture: tuple = DEFAULT_TEXTURE
    seed: int = 0
    n_views: int = field(default=N_VIEWS, init=False)

    def __post_init__(self):
        for name in ("n_frames", "view_h", "view_w", "pool", "channels"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "texture", tuple(self.texture))
        for o in self.objects:
            if o.width < 1 or o.height < 1:
                raise ConfigError("object sizes must be positive")
            if o.width > self.world_width or o.height > self.view_h:
                raise ConfigError("object larger than the world")
            if not 0.0 <= o.intensity <= 1.0:
                raise ConfigError("object intensity must lie in [0, 1]")

    @property
    def world_width(self) -> int:
        return self.n_views * self.view_w

    def sector(self, view: int) -> tuple[int, int]:
        """Half-open world column range of view ``view`` (1-based)."""
        return (view - 1) * self.view_w, view * self.view_w

    @property
    def latent_hw(self) -> tuple[int, int]:
        self.check_pool()
        return self.view_h // self.pool, self.view_w // self.pool

    def check_pool(self):
        if self.view_h % self.pool or self.view_w % self.pool:
            raise ConfigError(f"pool {self.pool} does not divide view size {self.view_h}x{self.view_w}")


def background_world(spec: SceneSpec) -> np.ndarray:
    """Static texture ``[C, view_h, world_width]`` in [0, 1]."""
    ys = (np.arange(spec.view_h) + 0.5)[:, None]
    xs = (np.arange(spec.world_width) + 0.5)[None, :]
    out = np.empty((spec.channels, spec.view_h, spec.world_width))
    for c in range(spec.channels):
        img = np.full((spec.view_h, spec.world_width), spec.background)
        for term in spec.texture:
            arg = 2 * np.pi * (term.cycles_x * xs / spec.world_width + term.cycles_y * ys / spec.view_h)
            img = img + term.amplitude * np.sin(arg + term.phase + 0.7 * c)
        out[c] = img
    return np.clip(out, 0.0, 1.0)


def object_footprint(spec: SceneSpec, obj: ObjectSpec, frame: int) -> np.ndarray:
    """Boolean ``[view_h, world_width]`` coverage of one object."""
    left, top = obj.left_top(frame)
    cols = (left + np.arange(obj.width)) % spec.world_width
    rows = (top + np.arange(obj.height)) % spec.view_h
    mask = np.zeros((spec.view_h, spec.world_width), dtype=bool)
    mask[np.ix_(rows, cols)] = True
    return mask


def render_world(spec: SceneSpec, frame: int):
    if not 1 <= frame <= spec.n_frames:
        raise ParameterError(f"frame {frame} outside 1..{spec.n_frames}")
    img = background_world(spec)
    fg = np.zeros((spec.view_h, spec.world_width), dtype=bool)
    for obj in spec.objects:
        cover = object_footprint(spec, obj, frame)
        img[:, cover] = obj.intensity
        fg |= cover
    return img, fg


def render(spec: SceneSpec, frame: int, view: int):
    """Image ``[C, H, W]`` and foreground mask ``[1, H, W]`` of one view."""
    if not 1 <= view <= spec.n_views:
        raise ParameterError(f"view {view} outside 1..{spec.n_views}")
    img, fg = render_world(spec, frame)
    lo, hi = spec.sector(view)
    return img[:, :, lo:hi].copy(), fg[None, :, lo:hi].astype(np.float64)


def avg_pool(x, k):
    *lead, h, w = x.shape
    if h % k or w % k:
        raise ConfigError(f"pool {k} does not divide {h}x{w}")
    return x.reshape(*lead, h // k, k, w // k, k).mean(axis=(-3, -1))


def any_pool(mask, k):
    *lead, h, w = mask.shape
    if h % k or w % k:
        raise ConfigError(f"pool {k} does not divide {h}x{w}")
    return (mask.reshape(*lead, h // k, k, w // k, k).max(axis=(-3, -1)) > 0).astype(np.float64)


@dataclass
class SceneDataset:
    latents: np.ndarray  # [V, N, C, h, w]
    masks: MaskVolume  # background mask at latent resolution
    spec: SceneSpec
    images: np.ndarray  # [V, N, C, H, W]

    @property
    def shape(self):
        return self.latents.shape


def build_dataset(spec: SceneSpec) -> SceneDataset:
    spec.check_pool()
    frames = pmap(lambda n: render_world(spec, n), range(1, spec.n_frames + 1))
    v, w = spec.n_views, spec.view_w
    images = np.empty((v, spec.n_frames, spec.channels, spec.view_h, w))
    fg = np.empty((v, spec.n_frames, 1, spec.view_h, w))
    for n, (img, mask) in enumerate(frames):
        for m in range(v):
            images[m, n] = img[:, :, m * w:(m + 1) * w]
            fg[m, n, 0] = mask[:, m * w:(m + 1) * w]
    latents = avg_pool(images, spec.pool)
    mask_b = 1.0 - any_pool(fg, spec.pool)
    return SceneDataset(latents=latents, masks=MaskVolume(mask_b), spec=spec, images=images)


def latent_world_coords(spec: SceneSpec):
    """World column and row centres of every latent pixel: ``([V, w], [h])``."""
    h, w = spec.latent_hw
    cols = np.arange(spec.n_views)[:, None] * w + np.arange(w)[None, :] + 0.5
    rows = np.arange(h) + 0.5
    return cols, rows


def conditioning(spec: SceneSpec, masks: MaskVolume) -> np.ndarray:
    """Layout conditioning ``[V, N, 6, h, w]``: foreground indicator, two
    harmonics of the ring angle and a vertical ramp."""
    h, w = spec.latent_hw
    cols, rows = latent_world_coords(spec)
    width = spec.n_views * w
    ang = 2 * np.pi * cols / width  # [V, w]
    v, n = spec.n_views, masks.shape[1]
    out = np.empty((v, n, 6, h, w))
    out[:, :, 0] = masks.mask_f[:, :, 0]
    for j, fn in enumerate((np.sin(ang), np.cos(ang), np.sin(2 * ang), np.cos(2 * ang))):
        out[:, :, 1 + j] = fn[:, None, None, :]
    out[:, :, 5] = (2 * rows / h - 1)[None, None, :, None]
    return out


N_COND = 6


def latent_object_cover(spec: SceneSpec, frame: int):
    """Per-object latent pixels fully covered by that object as the topmost
    layer, as a list of boolean ``[h, world_w / pool]`` panoramas, plus the
    any-foreground panorama."""
    k = spec.pool
    owner = np.full((spec.view_h, spec.world_width), -1)
    for j, obj in enumerate(spec.objects):
        owner[object_footprint(spec, obj, frame)] = j
    h, wl = spec.view_h // k, spec.world_width // k
    blocks = owner.reshape(h, k, wl, k).transpose(0, 2, 1, 3).reshape(h, wl, k * k)
    full = [np.all(blocks == j, axis=-1) for j in range(len(spec.objects))]
    anyfg = np.any(blocks >= 0, axis=-1)
    return full, anyfg


# --- config files ---------------------------------------------------------


def parse_kv(text: str):
    """Parse ``key = value`` text with ``[section]`` headers and ``#``
    comments into an ordered list of ``(section, {key: value})`` blocks."""
    blocks = [("", {})]
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            blocks.append((line[1:-1].strip().lower(), {}))
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower().replace("-", "_")
        if key in blocks[-1][1]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        blocks[-1][1][key] = value.strip()
    return blocks


def _floats(value, n, what):
    try:
        parts = [float(v) for v in value.replace(" ", "").split(",")]
    except ValueError as exc:
        raise ConfigError(f"{what}: cannot parse {value!r}") from exc
    if len(parts) != n:
        raise ConfigError(f"{what}: expected {n} comma-separated numbers, got {value!r}")
    return parts


def _int(value, what):
    try:
        return int(value)
    except ValueError as exc:
        raise ConfigError(f"{what}: expected an integer, got {value!r}") from exc


SCENE_KEYS = {"objects", "frames", "view_h", "view_w", "pool", "channels", "background", "texture", "seed"}
OBJECT_KEYS = {"size", "position", "velocity", "intensity"}


def scene_from_blocks(blocks, base: SceneSpec | None = None) -> SceneSpec:
    spec = base or SceneSpec()
    kw = {}
    objects = []
    saw_object = False
    for section, items in blocks:
        if section in ("", "scene"):
            for key, value in items.items():
                if key not in SCENE_KEYS:
                    if section == "scene":
                        raise ConfigError(f"unknown scene key {key!r}")
                    continue
                if key == "objects":
                    if value.lower() not in ("none", "0"):
                        raise ConfigError("objects = none is the only scene-level object setting")
                    kw["objects"] = ()
                elif key == "frames":
                    kw["n_frames"] = _int(value, key)
                elif key in ("view_h", "view_w", "pool", "channels", "seed"):
                    kw[key] = _int(value, key)
                elif key == "background":
                    kw["background"] = _floats(value, 1, key)[0]
                elif key == "texture":
                    terms = []
                    for chunk in value.split(";"):
                        if chunk.strip():
                            terms.append(TextureTerm(*_floats(chunk, 4, "texture")))
                    kw["texture"] = tuple(terms)
        elif section == "object":
            saw_object = True
            unknown = set(items) - OBJECT_KEYS
            if unknown:
                raise ConfigError(f"unknown object keys {sorted(unknown)}")
            if "size" not in items or "position" not in items:
                raise ConfigError("an [object] block needs size and position")
            w, h = _floats(items["size"], 2, "size")
            x, y = _floats(items["position"], 2, "position")
            vx, vy = _floats(items.get("velocity", "0,0"), 2, "velocity")
            intensity = _floats(items.get("intensity", "0.9"), 1, "intensity")[0]
            objects.append(ObjectSpec(int(w), int(h), x, y, vx, vy, intensity))
    if saw_object:
        kw["objects"] = tuple(objects)
    return replace(spec, **kw)


def load_scene(path) -> SceneSpec:
    text = Path(path).read_text(encoding="utf-8")
    return scene_from_blocks(parse_kv(text))


def write_ppm(path, image) -> None:
    """Binary P6 dump of a ``[C, H, W]`` image with values in [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[None]
    if img.shape[0] == 1:
        img = np.repeat(img, 3, axis=0)
    elif img.shape[0] != 3:
        img = np.repeat(img[:1], 3, axis=0)
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ConfigError(f"{path} is not a binary PPM")
    w, h = (int(v) for v in parts[1].split())
    data = np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)
    return data.transpose(2, 0, 1).astype(np.float64) / 255.0


def view_strip(video_frame) -> np.ndarray:
    """Concatenate the views of one frame ``[V, C, H, W]`` left to right."""
    return np.concatenate(list(np.asarray(video_frame)), axis=-1)


def scene_to_text(spec: SceneSpec) -> str:
    """Config text that :func:`load_scene` reads back to ``spec``."""
    lines = ["[scene]"]
    lines.append(f"frames = {spec.n_frames}")
    for key in ("view_h", "view_w", "pool", "channels", "seed"):
        lines.append(f"{key} = {getattr(spec, key)}")
    lines.append(f"background = {spec.background!r}")
    lines.append("texture = " + "; ".join(
        f"{t.amplitude!r},{t.cycles_x!r},{t.cycles_y!r},{t.phase!r}" for t in spec.texture))
    if not spec.objects:
        lines.append("objects = none")
    for o in spec.objects:
        lines += ["", "[object]", f"size = {o.width},{o.height}", f"position = {o.x!r},{o.y!r}",
                  f"velocity = {o.vx!r},{o.vy!r}", f"intensity = {o.intensity!r}"]
    return "\n".join(lines) + "\n"
