"""Per-image tiling adaptation.

A tiling is scored either by denoising quality (mean PSNR of the curvelet
denoiser over seeded noise realizations) or by the coefficient of variation
of the transform coefficients.  Scale locations are tuned by a Nelder-Mead
simplex over the integer boundary vector, angular division counts by a
coordinate-wise sweep, and both run coarse-to-fine over a resolution ladder.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from . import spectral
from .curvelet import (
    DIVISION_CHOICES,
    MIN_GAP,
    MIN_INNER,
    CoefficientSet,
    TilingConfig,
    TilingError,
    _nyquist,
    default_tiling,
    forward,
    inverse,
    max_scales,
)
from .imageio import Image, add_gaussian_noise, downsample, noise_sigma

log = logging.getLogger(__name__)

D_INITIAL = 8
THRESHOLD_FACTOR = 3.0
CALIBRATION_SEED = 0
DEFAULT_LADDER = (0.25, 0.5, 1.0)
MIN_STAGE_SIDE = 32
COST_KINDS = ("denoising_psnr", "coefficient_of_variation")


class DegenerateInput(ValueError):
    pass


@dataclass(frozen=True)
class ScaleSelectionReport:
    D: int
    mR: float
    J: int


@dataclass(frozen=True)
class CostSpec:
    """Objective for tiling adaptation.

    ``sigma=None`` means "derive from the image" via :func:`noise_sigma`;
    :func:`optimize_global` pins it once at full resolution.
    """

    kind: str = "denoising_psnr"
    sigma: float | None = None
    n_trials: int = 5
    base_seed: int = 0

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ValueError(f"cost kind must be one of {COST_KINDS}")
        if self.n_trials < 1:
            raise ValueError("n_trials must be at least 1")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("denoising sigma must be positive")


# --------------------------------------------------------------------------
# scale selection
# --------------------------------------------------------------------------

def mid_range(magnitudes: np.ndarray) -> float:
    """sqrt(max * min) over magnitudes, skipping (numerically) zero minima."""
    mags = np.abs(np.asarray(magnitudes, dtype=np.float64)).ravel()
    top = mags.max(initial=0.0)
    nonzero = mags[mags > top * 1e-12]
    if nonzero.size == 0:
        return 0.0
    return float(math.sqrt(top * nonzero.min()))


def select_scales(img: Image) -> ScaleSelectionReport:
    """Grow a centered square until it contains a below-mid-range bin."""
    mags = np.abs(spectral.fft2(img))
    mR = mid_range(mags)
    n1, n2 = img.shape
    k1, k2 = spectral.frequency_grid(n1, n2)
    limit = min(n1 // 2, n2 // 2)
    D = D_INITIAL
    while True:
        half = math.ceil(D / math.sqrt(2)) // 2
        if half > limit:
            break
        inside = (np.abs(k1) <= half) & (np.abs(k2) <= half)
        if np.any(mags[inside] < mR):
            break
        D += 2
    J = max(1, math.ceil(math.log2(max(n1, n2) / D)))
    return ScaleSelectionReport(D, mR, J)


def usable_scales(img: Image) -> int:
    """Scale count from :func:`select_scales`, clamped to what the dims allow."""
    return min(max(2, select_scales(img).J), max_scales(*img.shape))


# --------------------------------------------------------------------------
# denoising and costs
# --------------------------------------------------------------------------

@lru_cache(maxsize=512)
def noise_gains(config: TilingConfig) -> tuple[float, ...]:
    """Per-tile RMS response of the transform to unit white noise (seed 0)."""
    rng = np.random.default_rng(CALIBRATION_SEED)
    coeffs = forward(rng.standard_normal(config.dims), config)
    return tuple(float(np.sqrt(np.mean(c ** 2))) if c.size else 0.0 for _, c in coeffs.tiles)


def hard_threshold(coeffs: CoefficientSet, sigma: float) -> CoefficientSet:
    gains = noise_gains(coeffs.config)
    return coeffs.map_tiles(
        lambda g, c: np.where(np.abs(c) >= THRESHOLD_FACTOR * sigma * gains[g.tile_id], c, 0.0))


def denoise(noisy: Image, config: TilingConfig, sigma: float) -> Image:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return inverse(hard_threshold(forward(noisy, config), sigma))


def psnr(a: Image, b: Image) -> float:
    if a.shape != b.shape:
        raise ValueError("PSNR needs images of equal size")
    if a.max_intensity != b.max_intensity:
        raise ValueError("PSNR needs images with the same MAXI")
    mse = float(np.mean((a.pixels - b.pixels) ** 2))
    if mse == 0:
        return math.inf
    return 10 * math.log10(a.max_intensity ** 2 / mse)


def coefficient_of_variation(coeffs: CoefficientSet) -> float:
    mags = np.concatenate([np.abs(c).ravel() for _, c in coeffs.tiles])
    mean = mags.mean() if mags.size else 0.0
    if mean == 0:
        raise DegenerateInput("coefficient of variation undefined for all-zero coefficients")
    return float(mags.std() / mean)


def evaluate_cost(img: Image, config: TilingConfig, spec: CostSpec) -> float:
    if spec.kind == "coefficient_of_variation":
        return coefficient_of_variation(forward(img, config))
    sigma = spec.sigma if spec.sigma is not None else noise_sigma(img)
    scores = [
        psnr(denoise(add_gaussian_noise(img, sigma, spec.base_seed + t), config, sigma), img)
        for t in range(spec.n_trials)
    ]
    return float(np.mean(scores))


def _scorer(spec):
    """``spec`` may be a CostSpec or any callable ``(img, config) -> float``."""
    if callable(spec):
        return spec
    return lambda img, cfg: evaluate_cost(img, cfg, spec)


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# angular divisions
# --------------------------------------------------------------------------

def optimize_angles(img: Image, config: TilingConfig, spec, threads: int = 1) -> TilingConfig:
    """One coarse-to-fine sweep; each scale/quadrant pair takes its argmax count.

    Ties go to the smaller count.  Undivided scales are skipped.
    """
    score = _scorer(spec)
    cfg = config
    for s in range(2, cfg.J + 1):
        if not cfg.is_divided(s):
            continue
        for q in (1, 2):
            cands = [cfg.with_divisions(s, q, a) for a in DIVISION_CHOICES]
            costs = _map(lambda c: score(img, c), cands, threads)
            cfg = cands[int(np.argmax(costs))]
    return cfg


# --------------------------------------------------------------------------
# scale locations
# --------------------------------------------------------------------------

def repair_boundaries(values, upper: int, lower: int = MIN_INNER, gap: int = MIN_GAP):
    """Round, sort and push boundaries apart; None if they cannot fit."""
    vals = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        return None
    v = sorted(int(x) for x in np.floor(vals + 0.5))
    v[0] = max(v[0], lower)
    for i in range(1, len(v)):
        v[i] = max(v[i], v[i - 1] + gap)
    v[-1] = min(v[-1], upper)
    for i in range(len(v) - 2, -1, -1):
        v[i] = min(v[i], v[i + 1] - gap)
    if v[0] < lower:
        return None
    return tuple(v)


def _repair_config(config: TilingConfig, x) -> TilingConfig | None:
    J = config.J
    n1, n2 = config.dims
    V = repair_boundaries(x[:J], _nyquist(n1))
    H = repair_boundaries(x[J:], _nyquist(n2))
    if V is None or H is None:
        return None
    try:
        return config.with_locations(V, H)
    except TilingError:
        return None


def nelder_mead_max(f, x0, steps, max_iter: int = 100, tol: float = 1.0,
                    alpha: float = 1.0, gamma: float = 2.0, rho: float = 0.5, shrink: float = 0.5,
                    initial_values=None):
    """Maximize ``f`` with the Nelder-Mead simplex.

    The initial simplex is ``x0`` plus one vertex per coordinate offset by
    ``steps[i]``.  Stops when the simplex diameter drops below ``tol`` or
    after ``max_iter`` iterations.  Returns ``(best vertex, best value, iterations)``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    n = x0.size
    simplex = [x0.copy()]
    for i in range(n):
        v = x0.copy()
        v[i] += steps[i]
        simplex.append(v)
    simplex = np.array(simplex)
    fvals = np.array(initial_values if initial_values is not None else [f(v) for v in simplex],
                     dtype=np.float64)

    iterations = 0
    while iterations < max_iter:
        order = np.argsort(-fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        diffs = simplex[:, None, :] - simplex[None, :, :]
        if np.sqrt((diffs ** 2).sum(axis=-1)).max() < tol:
            break
        iterations += 1
        centroid = simplex[:-1].mean(axis=0)
        worst, f_worst = simplex[-1], fvals[-1]
        xr = centroid + alpha * (centroid - worst)
        fr = f(xr)
        if fr > fvals[0]:
            xe = centroid + gamma * (xr - centroid)
            fe = f(xe)
            simplex[-1], fvals[-1] = (xe, fe) if fe > fr else (xr, fr)
            continue
        if fr > fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr > f_worst:
            xc = centroid + rho * (xr - centroid)
            fc = f(xc)
            accept = fc >= fr
        else:
            xc = centroid + rho * (worst - centroid)
            fc = f(xc)
            accept = fc > f_worst
        if accept:
            simplex[-1], fvals[-1] = xc, fc
            continue
        for i in range(1, n + 1):
            simplex[i] = simplex[0] + shrink * (simplex[i] - simplex[0])
            fvals[i] = f(simplex[i])
    best = int(np.argmax(fvals))
    return simplex[best], float(fvals[best]), iterations


def optimize_scale_locations(img: Image, config: TilingConfig, spec, max_iter: int = 100,
                             threads: int = 1) -> TilingConfig:
    """Nelder-Mead over (V, H); returns the best feasible tiling evaluated."""
    score = _scorer(spec)
    cache: dict[tuple, float] = {}
    best = {"cfg": config, "cost": None}

    def evaluate(cfg):
        key = (cfg.V, cfg.H)
        if key not in cache:
            cache[key] = score(img, cfg)
        return cache[key]

    def record(cfg, cost):
        if best["cost"] is None or cost > best["cost"]:
            best["cfg"], best["cost"] = cfg, cost

    def f(x):
        cfg = _repair_config(config, x)
        if cfg is None:
            return -math.inf
        cost = evaluate(cfg)
        record(cfg, cost)
        return cost

    x0 = np.array(config.V + config.H, dtype=np.float64)
    steps = np.maximum(0.1 * x0, 2.0)
    # initial vertices are independent, so they may be scored concurrently
    vertices = [x0] + [x0 + steps[i] * np.eye(x0.size)[i] for i in range(x0.size)]
    repaired = [_repair_config(config, v) for v in vertices]
    todo = list(dict.fromkeys((c.V, c.H) for c in repaired if c is not None))
    costs = _map(lambda key: score(img, config.with_locations(*key)), todo, threads)
    cache.update(zip(todo, costs))
    init = [f(v) for v in vertices]

    nelder_mead_max(f, x0, steps, max_iter=max_iter, initial_values=init)
    return best["cfg"]


# --------------------------------------------------------------------------
# multi-resolution loop
# --------------------------------------------------------------------------

def _rescale(config: TilingConfig, dims) -> TilingConfig | None:
    r1 = _nyquist(dims[0]) / _nyquist(config.dims[0])
    r2 = _nyquist(dims[1]) / _nyquist(config.dims[1])
    V = repair_boundaries([v * r1 for v in config.V], _nyquist(dims[0]))
    H = repair_boundaries([h * r2 for h in config.H], _nyquist(dims[1]))
    if V is None or H is None:
        return None
    try:
        return replace(config, dims=tuple(dims), V=V, H=H)
    except TilingError:
        return None


def resolution_stages(dims, J: int, ladder=DEFAULT_LADDER) -> list[tuple[float, tuple[int, int]]]:
    stages = []
    for r in ladder:
        sub = dims if r == 1 else (int(math.floor(dims[0] * r)), int(math.floor(dims[1] * r)))
        if min(sub) < MIN_STAGE_SIDE or J > max_scales(*sub):
            continue
        stages.append((r, sub))
    return stages


def optimize_global(img: Image, spec, threads: int = 1, ladder=DEFAULT_LADDER,
                    J: int | None = None, history: list | None = None,
                    tune_angles: bool = True) -> TilingConfig:
    """Coarse-to-fine search for scale locations and division counts.

    ``history``, when given, receives ``(resolution, dims, step, cost)``
    tuples for each stage.  ``tune_angles=False`` keeps four divisions per
    scale/quadrant (used with rotation normalization).  At every stage the dyadic default tiling is also
    scored and used as the starting point if it beats the carried one.
    """
    n1, n2 = img.shape
    if n1 < 64 or n2 < 64:
        raise ValueError("optimize_global needs images of at least 64x64")
    if isinstance(spec, CostSpec) and spec.kind == "denoising_psnr" and spec.sigma is None:
        spec = replace(spec, sigma=noise_sigma(img))
    score = _scorer(spec)
    if J is None:
        J = usable_scales(img)
    stages = resolution_stages(img.shape, J, ladder)
    if not stages or stages[-1][0] != 1:
        raise ValueError("resolution ladder must end at full resolution")
    cfg = None
    for r, dims in stages:
        sub = img if r == 1 else downsample(img, r)
        start = default_tiling(dims[0], dims[1], J, 4, "periodic")
        start_cost = score(sub, start)
        if cfg is not None:
            carried = _rescale(cfg, dims)
            if carried is not None:
                carried_cost = score(sub, carried)
                if carried_cost >= start_cost:
                    start, start_cost = carried, carried_cost
        cfg = optimize_scale_locations(sub, start, spec, threads=threads)
        scale_cost = score(sub, cfg)
        if tune_angles:
            cfg = optimize_angles(sub, cfg, spec, threads=threads)
        angle_cost = score(sub, cfg)
        log.info("stage %s %s: start %.4f, scales %.4f, angles %.4f", r, dims, start_cost,
                 scale_cost, angle_cost)
        if history is not None:
            history += [(r, dims, "start", start_cost), (r, dims, "scales", scale_cost),
                        (r, dims, "angles", angle_cost)]
    return cfg
