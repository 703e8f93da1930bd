"""Dataset I/O: PFM and PNM codecs, scene manifests, and synthetic scenes.

Manifest grammar (one directive per line, ``#`` starts a comment, paths are
relative to the manifest's directory and may be quoted)::

    ref <path>                 reference view
    view <path> <b1> <b2>      target view and its baseline
    gt <path>                  optional ground-truth disparity (PFM)
    scale <factor>             multiply ground truth by this on load
    dataset <tag>              optional free-form tag

Images may be PFM (``Pf``/``PF``) or 8/16-bit binary PGM/PPM (``P5``/``P6``).
"""

from __future__ import annotations

import json
import math
import shlex
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, FormatError, LoadError, ParameterError
from .grids import ViewSet, to_grayscale

_WS = b" \t\r\n"


# --------------------------------------------------------------------------- PFM


def _read_token(data: bytes, pos: int) -> tuple[bytes, int, int]:
    """Next whitespace-delimited token as ``(token, start, end)``."""
    while pos < len(data) and data[pos] in _WS:
        pos += 1
    start = pos
    while pos < len(data) and data[pos] not in _WS:
        pos += 1
    if start == pos:
        raise FormatError("unexpected end of header", start)
    return data[start:pos], start, pos


def read_pfm(data: bytes) -> np.ndarray:
    """Decode a PFM file into a top-to-bottom float64 raster.

    Colour (``PF``) files are reduced to luminance.
    """
    magic, _, pos = _read_token(data, 0)
    if magic not in (b"Pf", b"PF"):
        raise FormatError(f"bad PFM magic {magic!r}", 0)
    fields = []
    starts = []
    for name in ("width", "height", "scale"):
        tok, start, pos = _read_token(data, pos)
        starts.append(start)
        try:
            fields.append(float(tok) if name == "scale" else int(tok))
        except ValueError:
            raise FormatError(f"invalid {name} {tok!r}", start) from None
    width, height, scale = fields
    if width <= 0 or height <= 0:
        raise FormatError(f"non-positive dimensions {width}x{height}", starts[0])
    if scale == 0.0 or not math.isfinite(scale):
        raise FormatError(f"invalid scale {scale}", starts[2])
    if pos >= len(data) or data[pos] not in _WS:
        raise FormatError("missing header terminator", pos)
    pos += 1

    channels = 3 if magic == b"PF" else 1
    count = width * height * channels
    need = 4 * count
    if len(data) - pos < need:
        raise FormatError(f"truncated payload: need {need} bytes, have {len(data) - pos}", len(data))
    dtype = "<f4" if scale < 0 else ">f4"
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(np.float64)
    if channels == 3:
        raster = to_grayscale(raster.reshape(height, width, 3))
    else:
        raster = raster.reshape(height, width)
    return np.ascontiguousarray(raster[::-1])


def write_pfm(grid: np.ndarray) -> bytes:
    """Encode a raster as little-endian greyscale PFM (scale -1.0)."""
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise DimensionError(f"PFM writer expects a 2-D raster, got shape {grid.shape}")
    h, w = grid.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    return header + np.ascontiguousarray(grid[::-1], dtype="<f4").tobytes()


# --------------------------------------------------------------------------- PNM


def read_pnm(data: bytes) -> np.ndarray:
    """Decode binary PGM (P5) or PPM (P6) to luminance in [0, 1]."""
    magic, _, pos = _read_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported PNM magic {magic!r}", 0)
    vals = []
    while len(vals) < 3:
        while pos < len(data) and data[pos] in _WS:
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
            continue
        tok, start, pos = _read_token(data, pos)
        try:
            vals.append(int(tok))
        except ValueError:
            raise FormatError(f"invalid PNM header field {tok!r}", start) from None
    width, height, maxval = vals
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise FormatError(f"invalid PNM header {width}x{height} maxval {maxval}", 0)
    pos += 1
    channels = 3 if magic == b"P6" else 1
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    count = width * height * channels
    need = count * np.dtype(dtype).itemsize
    if len(data) - pos < need:
        raise FormatError(f"truncated payload: need {need} bytes, have {len(data) - pos}", len(data))
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(np.float64) / maxval
    if channels == 3:
        return to_grayscale(raster.reshape(height, width, 3))
    return raster.reshape(height, width)


def write_pgm(grid: np.ndarray) -> bytes:
    """Encode a [0, 1] raster as 8-bit PGM."""
    h, w = grid.shape
    payload = np.clip(np.round(np.asarray(grid) * 255.0), 0, 255).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode("ascii") + payload.tobytes()


def read_image(path) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise LoadError(f"cannot read file ({exc.strerror})", path) from exc
    try:
        if data[:2] in (b"Pf", b"PF"):
            return read_pfm(data)
        return read_pnm(data)
    except FormatError as exc:
        raise LoadError(str(exc), path) from exc


# --------------------------------------------------------------------------- manifests


@dataclass
class SceneManifest:
    reference: str
    views: list[tuple[str, float, float]]
    ground_truth: Optional[str] = None
    scale: float = 1.0
    dataset: str = ""
    root: Path = field(default_factory=Path)
    name: str = ""

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.root / path


def parse_manifest(text: str, root=".", name: str = "") -> SceneManifest:
    ref = None
    gt = None
    scale = 1.0
    dataset = ""
    views = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        try:
            parts = shlex.split(line, comments=True)
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
        if not parts:
            continue
        key, args = parts[0], parts[1:]
        try:
            if key == "ref" and len(args) == 1:
                ref = args[0]
            elif key == "view" and len(args) == 3:
                b1, b2 = float(args[1]), float(args[2])
                if not (math.isfinite(b1) and math.isfinite(b2)):
                    raise ValueError("non-finite baseline")
                views.append((args[0], b1, b2))
            elif key == "gt" and len(args) == 1:
                gt = args[0]
            elif key == "scale" and len(args) == 1:
                scale = float(args[0])
                if not math.isfinite(scale):
                    raise ValueError("non-finite scale")
            elif key == "dataset" and len(args) == 1:
                dataset = args[0]
            else:
                raise ValueError(f"unrecognised directive {line!r}")
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    if ref is None:
        raise FormatError("manifest has no 'ref' line")
    if not views:
        raise FormatError("manifest has no 'view' lines")
    return SceneManifest(ref, views, gt, scale, dataset, Path(root), name)


def read_manifest(path) -> SceneManifest:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise LoadError(f"cannot read manifest ({exc.strerror})", path) from exc
    try:
        return parse_manifest(text, path.parent, path.stem)
    except FormatError as exc:
        raise LoadError(str(exc), path) from exc


def format_manifest(m: SceneManifest) -> str:
    lines = []
    if m.dataset:
        lines.append(f"dataset {shlex.quote(m.dataset)}")
    lines.append(f"ref {shlex.quote(m.reference)}")
    for p, b1, b2 in m.views:
        lines.append(f"view {shlex.quote(p)} {b1!r} {b2!r}")
    if m.ground_truth:
        lines.append(f"gt {shlex.quote(m.ground_truth)}")
    if m.scale != 1.0:
        lines.append(f"scale {m.scale!r}")
    return "\n".join(lines) + "\n"


def load_scene(manifest: SceneManifest) -> ViewSet:
    """Load, grey-scale and baseline-normalise the scene a manifest describes."""
    from .schedule import normalise_baselines

    ref_path = manifest.resolve(manifest.reference)
    ref = read_image(ref_path)
    targets = []
    for i, (p, b1, b2) in enumerate(manifest.views):
        path = manifest.resolve(p)
        img = read_image(path)
        if img.shape != ref.shape:
            raise LoadError(f"shape {img.shape} differs from reference {ref.shape}", path)
        targets.append((Path(p).stem or f"view{i}", img, (b1, b2)))
    gt = None
    if manifest.ground_truth:
        path = manifest.resolve(manifest.ground_truth)
        gt = read_image(path) * manifest.scale
        if gt.shape != ref.shape:
            raise LoadError(f"shape {gt.shape} differs from reference {ref.shape}", path)
    try:
        views = ViewSet.build(ref, targets, gt, meta={"name": manifest.name, "dataset": manifest.dataset})
    except (DimensionError, ParameterError) as exc:
        raise LoadError(str(exc), ref_path) from exc
    return normalise_baselines(views)


# --------------------------------------------------------------------------- synthetic scenes


def cross_hair_baselines(arm: int) -> list[tuple[float, float]]:
    """Baselines of a cross-hair array with ``arm`` views per direction."""
    out = []
    for k in range(1, arm + 1):
        out += [(float(k), 0.0), (0.0, float(k)), (-float(k), 0.0), (0.0, -float(k))]
    return out


def collinear_baselines(left: int, right: int) -> list[tuple[float, float]]:
    return [(float(k), 0.0) for k in range(-left, right + 1) if k != 0]


@dataclass
class Layer:
    """A fronto-parallel textured plane.

    ``rect = (x0, y0, x1, y1)`` in reference pixel coordinates (half-open);
    ``None`` makes the plane unbounded.
    """

    disparity: float
    seed: int
    rect: Optional[tuple[float, float, float, float]] = None


@dataclass
class SynthSpec:
    width: int
    height: int
    layers: list[Layer]
    baselines: list[tuple[float, float]]
    noise_sigma: float = 0.0
    noise_seed: int = 0
    n_waves: int = 40
    min_freq: float = 0.05
    max_freq: float = 1.3

    def __post_init__(self):
        self.layers = [l if isinstance(l, Layer) else Layer(**l) for l in self.layers]
        self.baselines = [tuple(map(float, b)) for b in self.baselines]
        if self.width < 1 or self.height < 1:
            raise ParameterError(f"invalid size {self.width}x{self.height}")
        for l in self.layers:
            if not math.isfinite(l.disparity):
                raise ParameterError(f"non-finite layer disparity {l.disparity}")
            if l.rect is not None:
                x0, y0, x1, y1 = l.rect
                if not (0 <= x0 < x1 <= self.width and 0 <= y0 < y1 <= self.height):
                    raise ParameterError(f"layer rectangle {l.rect} outside {self.width}x{self.height}")
        if not self.baselines:
            raise ParameterError("synthetic scene needs at least one target baseline")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        d["layers"] = [Layer(**{**l, "rect": tuple(l["rect"]) if l.get("rect") else None}) for l in d["layers"]]
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


#: Foreground rectangles of the two-plane scene on a 128 grid, (x0, y0, x1, y1).
TWO_PLANE_RECTS = ((20, 24, 64, 70), (80, 16, 86, 110), (30, 90, 112, 96), (96, 60, 112, 76), (50, 100, 56, 124))


def two_plane_spec(
    size: int = 128,
    near: float = 3.0,
    far: float = 1.0,
    baselines: Optional[Sequence] = None,
    seed: int = 0,
    noise_sigma: float = 0.0,
) -> SynthSpec:
    """Background plane at ``far`` occluded by a foreground plane at ``near``.

    The foreground is cut into blocks and thin bars so a good share of the
    pixels lie near a depth edge.
    """
    f = size / 128.0
    layers = [Layer(far, seed)] + [
        Layer(near, seed + 1 + i, tuple(c * f for c in r)) for i, r in enumerate(TWO_PLANE_RECTS)
    ]
    return SynthSpec(
        width=size,
        height=size,
        layers=layers,
        baselines=list(baselines) if baselines is not None else cross_hair_baselines(2),
        noise_sigma=noise_sigma,
        noise_seed=seed + 99,
        min_freq=0.2,
        max_freq=2.0,
    )


class _Texture:
    """Band-limited random texture, evaluable at arbitrary real coordinates."""

    def __init__(self, seed: int, n_waves: int, min_freq: float, max_freq: float):
        rng = np.random.default_rng(seed)
        freq = np.exp(rng.uniform(math.log(min_freq), math.log(max_freq), n_waves))
        theta = rng.uniform(0.0, 2.0 * math.pi, n_waves)
        self.kx = freq * np.cos(theta)
        self.ky = freq * np.sin(theta)
        self.phase = rng.uniform(0.0, 2.0 * math.pi, n_waves)
        amp = rng.uniform(0.5, 1.0, n_waves) / np.sqrt(freq)
        self.amp = amp * (0.12 / math.sqrt(0.5 * np.sum(amp * amp)))
        self.mean = rng.uniform(0.35, 0.65)

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        arg = x[..., None] * self.kx + y[..., None] * self.ky + self.phase
        return np.clip(self.mean + np.sin(arg) @ self.amp, 0.0, 1.0)


def render_view(spec: SynthSpec, baseline=(0.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free image and visible-layer disparity seen from ``baseline``."""
    rows, cols = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    image = np.full(rows.shape, 0.5)
    disp = np.zeros(rows.shape)
    filled = np.zeros(rows.shape, dtype=bool)
    b1, b2 = float(baseline[0]), float(baseline[1])
    for layer in reversed(spec.layers):
        px = cols - b1 * layer.disparity
        py = rows - b2 * layer.disparity
        mask = ~filled
        if layer.rect is not None:
            x0, y0, x1, y1 = layer.rect
            mask &= (px >= x0) & (px < x1) & (py >= y0) & (py < y1)
        if not mask.any():
            continue
        tex = _Texture(layer.seed, spec.n_waves, spec.min_freq, spec.max_freq)
        image[mask] = tex(px[mask], py[mask])
        disp[mask] = layer.disparity
        filled |= mask
    return image, disp


def synth_scene(spec: SynthSpec) -> ViewSet:
    """Render the reference and every target view of a layered synthetic scene.

    A target at baseline ``B`` shows at pixel ``x`` the scene point that the
    reference shows at ``x - B w``, so ``I_r(s) = I_t(s + B w(s))`` holds
    wherever the point is not occluded.
    """
    rng = np.random.default_rng(spec.noise_seed)

    def noisy(img):
        if spec.noise_sigma > 0:
            img = np.clip(img + rng.normal(0.0, spec.noise_sigma, img.shape), 0.0, 1.0)
        return img

    ref, gt = render_view(spec)
    targets = []
    for i, b in enumerate(spec.baselines):
        img, _ = render_view(spec, b)
        targets.append((f"v{i:02d}", noisy(img), b))
    return ViewSet.build(noisy(ref), targets, gt, meta={"name": "synthetic"})


def write_scene(views: ViewSet, out_dir, name: str = "scene") -> Path:
    """Write a view set as PFM images plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{name}_ref.pfm").write_bytes(write_pfm(views.reference))
    entries = []
    for t in views.targets:
        fname = f"{name}_{t.view_id}.pfm"
        (out_dir / fname).write_bytes(write_pfm(t.image))
        entries.append((fname, t.baseline.b1, t.baseline.b2))
    gt_name = None
    if views.ground_truth is not None:
        gt_name = f"{name}_gt.pfm"
        (out_dir / gt_name).write_bytes(write_pfm(views.ground_truth))
    m = SceneManifest(f"{name}_ref.pfm", entries, gt_name, dataset="synthetic")
    path = out_dir / f"{name}.manifest"
    path.write_text(format_manifest(m))
    return path


def load_synth_spec(path) -> SynthSpec:
    path = Path(path)
    try:
        return SynthSpec.from_dict(json.loads(path.read_text()))
    except OSError as exc:
        raise LoadError(f"cannot read spec ({exc.strerror})", path) from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise LoadError(f"invalid synthetic spec: {exc}", path) from exc
