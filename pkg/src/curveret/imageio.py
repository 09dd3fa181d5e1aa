"""Image loading, preprocessing and synthetic texture generation."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

MIN_SIDE = 8
MAX_SYNTH_CLASSES = 16
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class ImageFormatError(ValueError):
    """Raised when a file is not a supported raster."""


@dataclass(frozen=True)
class Image:
    """A 2-D intensity grid with a declared peak intensity.

    Pixel values are expected in ``[0, max_intensity]`` for loaded images;
    noisy intermediates produced by :func:`add_gaussian_noise` may leave that
    range on purpose.
    """

    pixels: np.ndarray
    max_intensity: float = 1.0

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2:
            raise ValueError(f"image must be 2-D, got shape {px.shape}")
        if px.shape[0] < MIN_SIDE or px.shape[1] < MIN_SIDE:
            raise ValueError(f"image must be at least {MIN_SIDE}x{MIN_SIDE}, got {px.shape}")
        if not self.max_intensity > 0:
            raise ValueError("max_intensity must be positive")
        object.__setattr__(self, "pixels", px)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    @property
    def n1(self) -> int:
        return self.pixels.shape[0]

    @property
    def n2(self) -> int:
        return self.pixels.shape[1]

    def with_pixels(self, pixels) -> "Image":
        return Image(pixels, self.max_intensity)


def as_array(img) -> np.ndarray:
    if isinstance(img, Image):
        return img.pixels
    return np.asarray(img, dtype=np.float64)


# --------------------------------------------------------------------------
# raster I/O
# --------------------------------------------------------------------------

def _read_pnm(data: bytes) -> tuple[np.ndarray, int]:
    """Parse binary P5/P6 data into (array, maxval)."""
    magic = data[:2]
    tokens = []
    pos = 2
    while len(tokens) < 3:
        if pos >= len(data):
            raise ImageFormatError("truncated PNM header")
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
    pos += 1  # single whitespace before raster
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise ImageFormatError("malformed PNM header") from exc
    if not 0 < maxval < 65536:
        raise ImageFormatError(f"unsupported PNM maxval {maxval}")
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    if raster.size != count:
        raise ImageFormatError("truncated PNM raster")
    shape = (height, width, 3) if channels == 3 else (height, width)
    return raster.reshape(shape).astype(np.float64), maxval


def _luminance(rgb: np.ndarray) -> np.ndarray:
    r, g, b = LUMA_WEIGHTS
    return r * rgb[..., 0] + g * rgb[..., 1] + b * rgb[..., 2]


def load_image(path) -> Image:
    """Load a PGM/PPM (P5/P6) or PNG as a luminance image scaled to [0, 1]."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] in (b"P5", b"P6"):
        arr, maxval = _read_pnm(data)
    else:
        from PIL import Image as PILImage, UnidentifiedImageError

        try:
            with PILImage.open(path) as im:
                im.load()
                if im.mode in ("I;16", "I;16B", "I;16L", "I"):
                    arr = np.asarray(im, dtype=np.float64)
                    maxval = 65535
                elif im.mode == "L":
                    arr = np.asarray(im, dtype=np.float64)
                    maxval = 255
                else:
                    arr = np.asarray(im.convert("RGB"), dtype=np.float64)
                    maxval = 255
        except UnidentifiedImageError as exc:
            raise ImageFormatError(f"unsupported image format: {path}") from exc
    if arr.ndim == 3:
        arr = _luminance(arr)
    arr = np.clip(arr / maxval, 0.0, 1.0)
    return Image(arr, 1.0)


def save_pgm(img, path, bits: int = 8) -> None:
    """Write an image as binary PGM, quantizing [0, MAXI] to 8 or 16 bits."""
    maxi = img.max_intensity if isinstance(img, Image) else 1.0
    arr = np.clip(as_array(img) / maxi, 0.0, 1.0)
    if bits == 8:
        raster = np.round(arr * 255).astype("u1")
        maxval = 255
    elif bits == 16:
        raster = np.round(arr * 65535).astype(">u2")
        maxval = 65535
    else:
        raise ValueError("bits must be 8 or 16")
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode("ascii")
    _atomic_write(Path(path), header + raster.tobytes())


def _atomic_write(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


# --------------------------------------------------------------------------
# preprocessing
# --------------------------------------------------------------------------

def crop(img: Image, top: int, left: int, h: int, w: int) -> Image:
    n1, n2 = img.shape
    if top < 0 or left < 0 or h <= 0 or w <= 0 or top + h > n1 or left + w > n2:
        raise ValueError(f"crop ({top}, {left}, {h}, {w}) outside {n1}x{n2} image")
    return img.with_pixels(img.pixels[top:top + h, left:left + w].copy())


def gaussian_kernel(sigma_px: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps with radius ceil(3 sigma)."""
    radius = int(math.ceil(3 * sigma_px))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma_px) ** 2)
    return k / k.sum()


def gaussian_smooth(img: Image, sigma_px: float) -> Image:
    if not sigma_px > 0:
        raise ValueError("sigma_px must be positive")
    k = gaussian_kernel(sigma_px)
    out = ndimage.convolve1d(img.pixels, k, axis=0, mode="reflect")
    out = ndimage.convolve1d(out, k, axis=1, mode="reflect")
    return img.with_pixels(np.clip(out, 0.0, img.max_intensity))


def downsample(img: Image, factor: float) -> Image:
    """Anti-alias smooth then bilinearly resample to floor(N * factor)."""
    if not 0 < factor < 1:
        raise ValueError("downsample factor must lie in (0, 1)")
    n1, n2 = img.shape
    m1, m2 = int(math.floor(n1 * factor)), int(math.floor(n2 * factor))
    if m1 < MIN_SIDE or m2 < MIN_SIDE:
        raise ValueError(f"downsampled size {m1}x{m2} below {MIN_SIDE}x{MIN_SIDE}")
    smoothed = gaussian_smooth(img, 0.5 / factor).pixels
    # pixel-centre aligned sample positions
    rows = (np.arange(m1) + 0.5) * (n1 / m1) - 0.5
    cols = (np.arange(m2) + 0.5) * (n2 / m2) - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    out = ndimage.map_coordinates(smoothed, [rr, cc], order=1, mode="nearest")
    return img.with_pixels(np.clip(out, 0.0, img.max_intensity))


def add_gaussian_noise(img: Image, sigma: float, seed: int) -> Image:
    """Return ``img`` plus seeded i.i.d. Gaussian noise; the result is not clamped."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return img.with_pixels(img.pixels.copy())
    rng = np.random.default_rng(seed)
    return img.with_pixels(img.pixels + rng.normal(0.0, sigma, img.shape))


def noise_sigma(img: Image) -> float:
    """Noise level for the denoising objective: max(std(I), 0.05 * MAXI)."""
    return max(float(np.std(img.pixels)), 0.05 * img.max_intensity)


# --------------------------------------------------------------------------
# corpus manifests
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    role: str  # "query" | "test"


@dataclass
class CorpusManifest:
    entries: list[ManifestEntry]
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        self.root = Path(self.root)
        for e in self.entries:
            if e.role not in ("query", "test"):
                raise ValueError(f"bad role {e.role!r} for {e.path}")
        test_labels = {e.label for e in self.entries if e.role == "test"}
        for e in self.queries:
            if e.label not in test_labels:
                raise ValueError(f"query class {e.label!r} has no test entries")

    @property
    def queries(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.role == "query"]

    @property
    def tests(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.role == "test"]

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    def load(self, entry: ManifestEntry) -> Image:
        return load_image(self.resolve(entry))

    def write(self, path) -> None:
        lines = ["path,class,role"]
        lines += [f"{e.path},{e.label},{e.role}" for e in self.entries]
        _atomic_write(Path(path), ("\n".join(lines) + "\n").encode("utf-8"))


def read_manifest(path) -> CorpusManifest:
    """Read a ``path,class,role`` CSV; paths are relative to the file's directory."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["path", "class", "role"]:
            raise ValueError(f"{path}: manifest header must be 'path,class,role'")
        entries = [
            ManifestEntry(row["path"].strip(), row["class"].strip(), row["role"].strip())
            for row in reader
        ]
    root = path.parent
    for e in entries:
        resolved = (root / e.path).resolve()
        if root.resolve() not in resolved.parents:
            raise ValueError(f"{e.path} does not resolve under {root}")
    return CorpusManifest(entries, root)


# --------------------------------------------------------------------------
# synthetic textures
# --------------------------------------------------------------------------

def _class_params(n_classes: int) -> list[tuple[float, float]]:
    """(orientation in radians, radial frequency in cycles/pixel) per class.

    Orientations cycle through four directions; each block of four classes
    uses a new radial frequency, alternating low and high bands so some
    classes differ only by orientation at fine scale.
    """
    angles = [0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4]
    radii = [0.16, 0.375, 0.11, 0.30]
    return [(angles[i % 4] + (i // 8) * math.pi / 8, radii[(i // 4) % 4]) for i in range(n_classes)]


def _bandpass_noise(rng: np.random.Generator, shape, lo: float, hi: float) -> np.ndarray:
    white = rng.standard_normal(shape)
    f1 = np.fft.fftfreq(shape[0])[:, None]
    f2 = np.fft.fftfreq(shape[1])[None, :]
    rad = np.hypot(f1, f2)
    band = (rad >= lo) & (rad <= hi)
    out = np.fft.ifft2(np.fft.fft2(white) * band).real
    return out / (out.std() + 1e-12)


def synth_texture(angle: float, freq: float, shape, rng: np.random.Generator) -> np.ndarray:
    """Oriented grating plus band-passed noise, scaled into [0, 1]."""
    n1, n2 = shape
    y, x = np.mgrid[0:n1, 0:n2].astype(np.float64)
    phase = rng.uniform(0, 2 * math.pi)
    # angle measured from the horizontal image axis toward the vertical one
    arg = 2 * math.pi * freq * (x * math.cos(angle) + y * math.sin(angle)) + phase
    grating = np.cos(arg)
    noise = _bandpass_noise(rng, shape, 0.04, 0.08)
    return np.clip(0.5 + 0.3 * grating + 0.06 * noise, 0.0, 1.0)


def synth_texture_corpus(n_classes: int, crops_per_class: int, size: int, seed: int,
                         outdir) -> CorpusManifest:
    """Write a seeded grating corpus and its ``manifest.csv`` under ``outdir``.

    Each class is one large texture cut into ``crops_per_class`` non-overlapping
    ``size`` x ``size`` crops; the first crop of every class is the query.
    """
    if not 1 <= n_classes <= MAX_SYNTH_CLASSES:
        raise ValueError(f"n_classes must be in 1..{MAX_SYNTH_CLASSES}")
    if size < 64:
        raise ValueError("size must be at least 64")
    if crops_per_class < 2:
        raise ValueError("need at least one query and one test crop per class")
    outdir = Path(outdir)
    rng = np.random.default_rng(seed)
    entries = []
    for c, (angle, freq) in enumerate(_class_params(n_classes)):
        label = f"class{c:02d}"
        big = synth_texture(angle, freq, (size, size * crops_per_class), rng)
        for j in range(crops_per_class):
            name = f"{label}_{j}.pgm"
            save_pgm(Image(big[:, j * size:(j + 1) * size]), outdir / name)
            entries.append(ManifestEntry(name, label, "query" if j == 0 else "test"))
    manifest = CorpusManifest(entries, outdir)
    manifest.write(outdir / "manifest.csv")
    return manifest
