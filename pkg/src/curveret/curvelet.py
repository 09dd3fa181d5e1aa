"""Tile-based discrete curvelet transform with binary frequency wedges.

The centered frequency plane is split into nested rectangular scales; every
scale except the coarsest is split into two quadrants (one per side of the
rectangle that faces the processed half-plane) and each quadrant into equal
segments of the outer rectangle edge.  Only one half-plane is processed: the
other half follows from Hermitian symmetry of real images.  Each geometric
wedge yields one complex coefficient grid which is stored as a ``real`` and an
``imag`` tile.

Scale boundaries are inclusive: bin ``(k1, k2)`` lies inside scale ``s`` when
``|k1| <= V[s]`` and ``|k2| <= H[s]``.  Everything outside scale ``J - 1``
belongs to the outermost scale, so in ``periodic`` mode the outer wedges run
out to the Nyquist edge and corners; in ``highpass`` mode that region is a
single undivided tile.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import spectral
from .imageio import Image, as_array

DIVISION_CHOICES = (4, 8, 12, 16, 20)
OUTER_MODES = ("highpass", "periodic")
MIN_INNER = 4
MIN_GAP = 2
FEATURE_CONVENTION = "cmag-v1"


class TilingError(ValueError):
    """Raised for tilings that violate the geometric invariants."""


class IntegrityError(ValueError):
    """Raised when a coefficient set does not match its tiling."""


def _nyquist(n: int) -> int:
    return (n + 1) // 2


@dataclass(frozen=True)
class TilingConfig:
    """Scale boundaries and angular division counts for one image size.

    ``V``/``H`` hold the vertical (row-frequency) and horizontal
    (column-frequency) boundary of every scale, coarsest first.  ``A`` holds
    the ``(quadrant 1, quadrant 2)`` division counts for scales ``2..J``.
    """

    dims: tuple[int, int]
    V: tuple[int, ...]
    H: tuple[int, ...]
    A: tuple[tuple[int, int], ...]
    outer_mode: str = "periodic"

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "V", tuple(int(v) for v in self.V))
        object.__setattr__(self, "H", tuple(int(h) for h in self.H))
        object.__setattr__(self, "A", tuple((int(a), int(b)) for a, b in self.A))
        self.validate()

    @property
    def J(self) -> int:
        return len(self.V)

    def divisions(self, scale: int, quadrant: int) -> int:
        return self.A[scale - 2][quadrant - 1]

    def is_divided(self, scale: int) -> bool:
        return scale >= 2 and not (scale == self.J and self.outer_mode == "highpass")

    def validate(self) -> None:
        n1, n2 = self.dims
        if len(self.dims) != 2 or n1 < 8 or n2 < 8:
            raise TilingError(f"bad dims {self.dims}")
        if self.outer_mode not in OUTER_MODES:
            raise TilingError(f"outer_mode must be one of {OUTER_MODES}")
        if self.J < 2:
            raise TilingError("need at least two scales")
        if len(self.H) != self.J or len(self.A) != self.J - 1:
            raise TilingError("V, H and A lengths disagree with J")
        for name, bounds, n in (("V", self.V, n1), ("H", self.H, n2)):
            if bounds[0] < MIN_INNER:
                raise TilingError(f"{name}[1] = {bounds[0]} < {MIN_INNER}")
            if any(b - a < MIN_GAP for a, b in zip(bounds, bounds[1:])):
                raise TilingError(f"{name} must increase by at least {MIN_GAP}: {bounds}")
            if bounds[-1] > _nyquist(n):
                raise TilingError(f"{name}[J] = {bounds[-1]} beyond Nyquist {_nyquist(n)}")
        for pair in self.A:
            if any(a not in DIVISION_CHOICES for a in pair):
                raise TilingError(f"division counts must be in {DIVISION_CHOICES}: {pair}")

    def with_locations(self, V, H) -> "TilingConfig":
        return replace(self, V=tuple(V), H=tuple(H))

    def with_divisions(self, scale: int, quadrant: int, count: int) -> "TilingConfig":
        A = [list(p) for p in self.A]
        A[scale - 2][quadrant - 1] = count
        return replace(self, A=tuple(tuple(p) for p in A))

    # -- serialization -----------------------------------------------------

    def to_text(self) -> str:
        lines = [
            "# curveret tiling v1",
            f"dims = {self.dims[0]} {self.dims[1]}",
            f"J = {self.J}",
            "V = " + " ".join(map(str, self.V)),
            "H = " + " ".join(map(str, self.H)),
            f"outer_mode = {self.outer_mode}",
        ]
        for s in range(2, self.J + 1):
            for q in (1, 2):
                lines.append(f"A[{s},{q}] = {self.divisions(s, q)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TilingConfig":
        kv = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise TilingError(f"malformed tiling line: {raw!r}")
            kv[key.strip()] = value.strip()
        try:
            J = int(kv["J"])
            dims = tuple(int(x) for x in kv["dims"].split())
            V = tuple(int(x) for x in kv["V"].split())
            H = tuple(int(x) for x in kv["H"].split())
            A = tuple((int(kv[f"A[{s},1]"]), int(kv[f"A[{s},2]"])) for s in range(2, J + 1))
            mode = kv["outer_mode"]
        except KeyError as exc:
            raise TilingError(f"tiling text lacks key {exc}") from None
        if len(V) != J:
            raise TilingError("J does not match the number of V entries")
        return cls(dims, V, H, A, mode)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="ascii")

    @classmethod
    def load(cls, path) -> "TilingConfig":
        return cls.from_text(Path(path).read_text(encoding="ascii"))

    def fingerprint(self) -> str:
        payload = (self.to_text() + FEATURE_CONVENTION).encode("ascii")
        return hashlib.sha256(payload).hexdigest()[:16]


def _dyadic(n: int, J: int) -> tuple[int, ...]:
    top = _nyquist(n)
    return tuple(int(math.floor(top / 2 ** (J - s) + 0.5)) for s in range(1, J + 1))


def max_scales(n1: int, n2: int) -> int:
    """Largest J whose dyadic boundaries keep the coarsest box >= 4 bins."""
    J = 2
    while min(_nyquist(n1), _nyquist(n2)) / 2 ** J >= MIN_INNER:
        J += 1
    return J


def default_tiling(n1: int, n2: int, J: int, divisions: int = 4,
                   outer_mode: str = "periodic") -> TilingConfig:
    """Dyadic scale boundaries halving from Nyquist, uniform division counts."""
    if J < 2:
        raise TilingError("J must be at least 2")
    for n in (n1, n2):
        if _nyquist(n) / 2 ** (J - 1) < MIN_INNER:
            raise TilingError(f"J = {J} too large for {n1}x{n2} image")
    if divisions not in DIVISION_CHOICES:
        raise TilingError(f"divisions must be in {DIVISION_CHOICES}")
    A = ((divisions, divisions),) * (J - 1)
    return TilingConfig((n1, n2), _dyadic(n1, J), _dyadic(n2, J), A, outer_mode)


# --------------------------------------------------------------------------
# wedge geometry
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WedgeGeometry:
    """One tile of the transform.

    ``quadrant`` is 1 for wedges that carry horizontal image structure
    (energy near the row-frequency axis), 2 for vertical structure, and 0
    for undivided tiles (the coarsest scale and a high-pass outer tile).
    ``box`` is ``(row0, row1, col0, col1)`` in centered-plane indices,
    half-open; ``mask`` is the support inside that box.
    """

    tile_id: int
    scale: int
    quadrant: int
    wedge_index: int
    part: str
    box: tuple[int, int, int, int]
    mask: np.ndarray = field(compare=False, repr=False)

    @property
    def bin_count(self) -> int:
        return int(self.mask.sum())

    @property
    def box_shape(self) -> tuple[int, int]:
        r0, r1, c0, c1 = self.box
        return (r1 - r0, c1 - c0)

    def support(self, dims) -> np.ndarray:
        """Full-plane boolean mask."""
        out = np.zeros(dims, dtype=bool)
        r0, r1, c0, c1 = self.box
        out[r0:r1, c0:c1] = self.mask
        return out


def geometric_wedges(config: TilingConfig) -> list[tuple[int, int, int]]:
    """(scale, quadrant, wedge_index) for every geometric wedge, canonical order."""
    out = [(1, 0, 0)]
    for s in range(2, config.J + 1):
        if config.is_divided(s):
            for q in (1, 2):
                out += [(s, q, w) for w in range(config.divisions(s, q))]
        else:
            out.append((s, 0, 0))
    return out


def _ceil_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return -(-num // den)


@lru_cache(maxsize=128)
def label_plane(config: TilingConfig) -> np.ndarray:
    """Geometric wedge id for every bin of the centered plane; -1 on the conjugate half."""
    n1, n2 = config.dims
    k1, k2 = spectral.frequency_grid(n1, n2)
    k1 = k1.astype(np.int64)
    k2 = k2.astype(np.int64)
    J = config.J
    V = np.asarray(config.V, dtype=np.int64)
    H = np.asarray(config.H, dtype=np.int64)

    scale = np.full((n1, n2), J, dtype=np.int64)
    for s in range(J - 1, 0, -1):
        inside = (np.abs(k1) <= V[s - 1]) & (np.abs(k2) <= H[s - 1])
        scale[inside] = s
    Vs = V[scale - 1]
    Hs = H[scale - 1]

    def quadrants(e1, e2):
        q1 = (e1 > 0) & (e1 * Hs >= np.abs(e2) * Vs)
        q2 = (e2 > 0) & (e2 * Vs > np.abs(e1) * Hs)
        return q1, q2

    dc = (k1 == 0) & (k2 == 0)
    q1, q2 = quadrants(k1, k2)
    rule = q1 | q2 | dc

    ci = spectral.conjugate_index(n1)
    cj = spectral.conjugate_index(n2)
    conj_rule = rule[ci][:, cj]
    self_conj = (ci[:, None] == np.arange(n1)[:, None]) & (cj[None, :] == np.arange(n2)[None, :])
    missing = ~rule & ~conj_rule
    # Only the even-size Nyquist row/column can fall outside both halves.
    nyq_row = (n1 % 2 == 0) & (k1 == -(n1 // 2))
    nyq_col = (n2 % 2 == 0) & (k2 == -(n2 // 2))
    fixup = missing & (self_conj | (nyq_row & (k2 > 0)) | (nyq_col & (k1 > 0)))
    processed = rule | fixup

    # Fix-up bins are aliased to their +Nyquist frequency for wedge placement.
    e1 = np.where(fixup & nyq_row, n1 // 2, k1)
    e2 = np.where(fixup & nyq_col, n2 // 2, k2)
    q1, q2 = quadrants(e1, e2)

    labels = np.full((n1, n2), -1, dtype=np.int64)
    labels[processed & (scale == 1)] = 0
    offset = 1
    for s in range(2, J + 1):
        in_s = processed & (scale == s)
        if not config.is_divided(s):
            labels[in_s] = offset
            offset += 1
            continue
        for q, qmask in ((1, q1), (2, q2)):
            A = config.divisions(s, q)
            sel = in_s & qmask
            a1, a2 = e1[sel], e2[sel]
            v, h = V[s - 1], H[s - 1]
            if q == 1:
                num, den = (a2 * v + a1 * h) * A, 2 * a1 * h
            else:
                num, den = (a2 * v - a1 * h) * A, 2 * a2 * v
            w = np.clip(_ceil_div(num, den) - 1, 0, A - 1)
            labels[sel] = offset + w
            offset += A
    if np.any(labels[processed] < 0):
        raise AssertionError("unlabelled bin in processed half-plane")
    labels.setflags(write=False)
    return labels


def processed_half_plane(config: TilingConfig) -> np.ndarray:
    return label_plane(config) >= 0


@lru_cache(maxsize=128)
def _wedge_list(config: TilingConfig) -> tuple[WedgeGeometry, ...]:
    labels = label_plane(config)
    out = []
    tid = 0
    for gid, (s, q, w) in enumerate(geometric_wedges(config)):
        full = labels == gid
        rows = np.flatnonzero(full.any(axis=1))
        cols = np.flatnonzero(full.any(axis=0))
        if rows.size:
            box = (int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1)
        else:
            box = (0, 0, 0, 0)
        mask = full[box[0]:box[1], box[2]:box[3]].copy()
        mask.setflags(write=False)
        for part in ("real", "imag"):
            out.append(WedgeGeometry(tid, s, q, w, part, box, mask))
            tid += 1
    return tuple(out)


def build_wedge_masks(config: TilingConfig) -> list[WedgeGeometry]:
    return list(_wedge_list(config))


def tile_count(config: TilingConfig) -> int:
    n = 1
    for s in range(2, config.J + 1):
        n += config.divisions(s, 1) + config.divisions(s, 2) if config.is_divided(s) else 1
    return 2 * n


# --------------------------------------------------------------------------
# transform
# --------------------------------------------------------------------------

@dataclass
class CoefficientSet:
    tiles: list[tuple[WedgeGeometry, np.ndarray]]
    config: TilingConfig
    max_intensity: float = 1.0

    @property
    def dims(self) -> tuple[int, int]:
        return self.config.dims

    def __len__(self) -> int:
        return len(self.tiles)

    def wedges(self):
        """Yield ``(geometry of the real part, complex coefficients)`` per geometric wedge."""
        for i in range(0, len(self.tiles), 2):
            (g, re), (_, im) = self.tiles[i], self.tiles[i + 1]
            yield g, re + 1j * im

    def map_tiles(self, fn) -> "CoefficientSet":
        return CoefficientSet([(g, fn(g, c)) for g, c in self.tiles], self.config, self.max_intensity)


def forward(img, config: TilingConfig) -> CoefficientSet:
    arr = as_array(img)
    if arr.shape != config.dims:
        raise ValueError(f"image {arr.shape} does not match tiling dims {config.dims}")
    maxi = img.max_intensity if isinstance(img, Image) else 1.0
    X = spectral.fft2(arr)
    tiles = []
    geoms = _wedge_list(config)
    for i in range(0, len(geoms), 2):
        g = geoms[i]
        r0, r1, c0, c1 = g.box
        if g.mask.size == 0:
            c = np.zeros((0, 0), dtype=np.complex128)
        else:
            c = np.fft.ifft2(X[r0:r1, c0:c1] * g.mask, norm="ortho")
        tiles.append((g, c.real.copy()))
        tiles.append((geoms[i + 1], c.imag.copy()))
    return CoefficientSet(tiles, config, maxi)


def _check_integrity(coeffs: CoefficientSet) -> None:
    geoms = _wedge_list(coeffs.config)
    if len(coeffs.tiles) != len(geoms):
        raise IntegrityError(f"expected {len(geoms)} tiles, got {len(coeffs.tiles)}")
    for (g, c), ref in zip(coeffs.tiles, geoms):
        if g != ref or np.shape(c) != ref.box_shape:
            raise IntegrityError(f"tile {ref.tile_id} does not match the tiling geometry")


def inverse(coeffs: CoefficientSet) -> Image:
    _check_integrity(coeffs)
    config = coeffs.config
    n1, n2 = config.dims
    half = np.zeros((n1, n2), dtype=np.complex128)
    for g, c in coeffs.wedges():
        if g.mask.size == 0:
            continue
        r0, r1, c0, c1 = g.box
        S = np.fft.fft2(c, norm="ortho")
        block = half[r0:r1, c0:c1]
        block[g.mask] = S[g.mask]
    processed = processed_half_plane(config)
    ci = spectral.conjugate_index(n1)
    cj = spectral.conjugate_index(n2)
    X = np.where(processed, half, np.conj(half[ci][:, cj]))
    self_conj = (ci[:, None] == np.arange(n1)[:, None]) & (cj[None, :] == np.arange(n2)[None, :])
    X[self_conj] = X[self_conj].real
    return Image(spectral.ifft2(X), coeffs.max_intensity)
