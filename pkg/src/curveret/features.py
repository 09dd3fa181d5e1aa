"""Per-wedge (mean, std) feature vectors, weighting and L1 distance."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .curvelet import CoefficientSet, TilingConfig, default_tiling, geometric_wedges

SEISMIC_PRESETS = ("fault", "horizontal", "dome", "clear")


class IncompatibleFeatures(ValueError):
    """Raised when comparing feature vectors from different tilings."""


@dataclass(frozen=True)
class FeatureVector:
    """Interleaved ``(mu_1, sigma_1, ..., mu_K, sigma_K)`` over geometric wedges.

    ``scale_spans`` lists ``(scale, start, end)`` in wedge (pair) indices,
    half-open.  ``magnitude_sums`` holds the per-wedge sum of coefficient
    magnitudes used as the rotation sort key.
    """

    values: np.ndarray
    fingerprint: str
    scale_spans: tuple[tuple[int, int, int], ...]
    magnitude_sums: np.ndarray | None = None
    rotation_normalized: bool = False
    weighted: bool = False

    @property
    def K(self) -> int:
        return len(self.values) // 2

    @property
    def flags(self) -> str:
        return ("r" if self.rotation_normalized else "") + ("w" if self.weighted else "") or "-"

    def means(self) -> np.ndarray:
        return self.values[0::2]

    def stds(self) -> np.ndarray:
        return self.values[1::2]

    def to_csv_row(self) -> str:
        return ",".join([self.fingerprint, self.flags] + [repr(float(v)) for v in self.values])

    @classmethod
    def from_csv_fields(cls, fields, scale_spans=()) -> "FeatureVector":
        fingerprint, flags, *vals = fields
        return cls(np.array([float(v) for v in vals]), fingerprint, tuple(scale_spans),
                   rotation_normalized="r" in flags, weighted="w" in flags)


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or np.any(w < 0):
            raise ValueError("weights must be a nonnegative 1-D vector")
        object.__setattr__(self, "weights", w)


def scale_spans(config: TilingConfig) -> tuple[tuple[int, int, int], ...]:
    spans = []
    for i, (s, _, _) in enumerate(geometric_wedges(config)):
        if spans and spans[-1][0] == s:
            spans[-1][2] = i + 1
        else:
            spans.append([s, i, i + 1])
    return tuple(tuple(x) for x in spans)


def extract_features(coeffs: CoefficientSet) -> FeatureVector:
    """Mean and population std of complex coefficient magnitudes per wedge."""
    vals, sums = [], []
    for _, c in coeffs.wedges():
        mag = np.abs(c)
        if mag.size:
            vals += [mag.mean(), mag.std()]
            sums.append(mag.sum())
        else:
            vals += [0.0, 0.0]
            sums.append(0.0)
    return FeatureVector(np.array(vals), coeffs.config.fingerprint(), scale_spans(coeffs.config),
                         np.array(sums))


def apply_weights(f: FeatureVector, w: WeightVector) -> FeatureVector:
    if len(w.weights) != f.K:
        raise ValueError(f"weight length {len(w.weights)} does not match K = {f.K}")
    return replace(f, values=f.values * np.repeat(w.weights, 2), weighted=True)


def distance(fa: FeatureVector, fb: FeatureVector) -> float:
    """L1 distance between feature vectors from the same tiling."""
    if fa.fingerprint != fb.fingerprint or len(fa.values) != len(fb.values):
        raise IncompatibleFeatures(f"fingerprints {fa.fingerprint} and {fb.fingerprint} differ")
    if fa.rotation_normalized != fb.rotation_normalized:
        raise IncompatibleFeatures("cannot compare rotation-normalized with raw features")
    return float(np.abs(fa.values - fb.values).sum())


def rotation_normalize(f: FeatureVector) -> FeatureVector:
    """Sort each scale's (mu, sigma) pairs by descending magnitude sum.

    Ties keep the original wedge order, so the operation is idempotent.
    """
    if f.magnitude_sums is None:
        raise RuntimeError("feature vector carries no magnitude sums; re-extract it")
    pairs = f.values.reshape(-1, 2)
    order = np.arange(f.K)
    for _, start, end in f.scale_spans:
        key = f.magnitude_sums[start:end]
        order[start:end] = start + np.argsort(-key, kind="stable")
    return replace(f, values=pairs[order].ravel(), magnitude_sums=f.magnitude_sums[order],
                   rotation_normalized=True)


def rotation_tiling(n1: int, n2: int, J: int) -> TilingConfig:
    return default_tiling(n1, n2, J, 4, "periodic")


def seismic_weight_preset(kind: str, config: TilingConfig) -> WeightVector:
    """Binary wedge weights for the seismic activity classes.

    Scale 1 is the coarsest.  ``fault`` keeps vertical-structure wedges
    (quadrant 2) of the two finest scales, ``horizontal`` keeps
    horizontal-structure wedges (quadrant 1) of the two coarsest scales,
    ``dome`` keeps every wedge of the two finest scales, ``clear`` keeps all.
    """
    if kind not in SEISMIC_PRESETS:
        raise ValueError(f"unknown preset {kind!r}; choose from {SEISMIC_PRESETS}")
    J = config.J
    if J < 4:
        raise ValueError(f"seismic presets need J >= 4, tiling has J = {J}")
    fine = (J - 1, J)
    w = []
    for s, q, _ in geometric_wedges(config):
        if kind == "clear":
            keep = True
        elif kind == "fault":
            keep = s in fine and q == 2
        elif kind == "horizontal":
            keep = s in (1, 2) and q == 1
        else:
            keep = s in fine
        w.append(1.0 if keep else 0.0)
    return WeightVector(np.array(w), kind)
