"""Feature indexes, ranked queries and retrieval metrics."""

from __future__ import annotations

import csv
import io
import os
from fractions import Fraction
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .adapt import CostSpec, _map, optimize_global, usable_scales
from .curvelet import TilingConfig, default_tiling, forward
from .features import (
    FeatureVector,
    IncompatibleFeatures,
    WeightVector,
    apply_weights,
    distance,
    extract_features,
    rotation_normalize,
    seismic_weight_preset,
)
from .imageio import CorpusManifest, Image, load_image

INDEX_MAGIC = "curveret-index v1"
MODES = ("default_highpass", "periodic", "adaptive")


@dataclass(frozen=True)
class MethodSpec:
    mode: str = "periodic"
    J: int | None = None  # None: chosen by scale selection
    divisions: int = 4
    rotation_normalized: bool = False
    weights: str | WeightVector | None = None
    cost: CostSpec = field(default_factory=CostSpec)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.rotation_normalized and self.mode != "adaptive" and self.divisions != 4:
            raise ValueError("rotation normalization uses 4 divisions per scale/quadrant")
        if self.mode == "adaptive" and not isinstance(self.cost, CostSpec):
            raise ValueError("adaptive mode needs a CostSpec")

    @property
    def outer_mode(self) -> str:
        return "highpass" if self.mode == "default_highpass" else "periodic"

    def flags(self) -> str:
        w = self.weights.label if isinstance(self.weights, WeightVector) else (self.weights or "none")
        J = "auto" if self.J is None else str(self.J)
        return (f"mode={self.mode};J={J};div={self.divisions};"
                f"rot={int(self.rotation_normalized)};weights={w}")

    @classmethod
    def from_flags(cls, flags: str) -> "MethodSpec":
        kv = dict(item.split("=", 1) for item in flags.split(";") if item)
        weights = None if kv.get("weights", "none") == "none" else kv["weights"]
        return cls(mode=kv["mode"], J=None if kv["J"] == "auto" else int(kv["J"]),
                   divisions=int(kv["div"]), rotation_normalized=kv["rot"] == "1", weights=weights)


def tiling_for(method: MethodSpec, dims, J: int) -> TilingConfig:
    """Fixed (non-adaptive) tiling for a method."""
    return default_tiling(dims[0], dims[1], J, method.divisions, method.outer_mode)


def resolve_J(method: MethodSpec, img: Image) -> int:
    return method.J if method.J is not None else usable_scales(img)


def featurize(img, config: TilingConfig, method: MethodSpec) -> FeatureVector:
    f = extract_features(forward(img, config))
    if method.rotation_normalized:
        f = rotation_normalize(f)
    if method.weights is not None:
        w = method.weights
        if not isinstance(w, WeightVector):
            w = seismic_weight_preset(w, config)
        f = apply_weights(f, w)
    return f


# --------------------------------------------------------------------------
# index files
# --------------------------------------------------------------------------

@dataclass
class IndexRow:
    id: str
    label: str
    source: Path
    features: FeatureVector


@dataclass
class FeatureIndex:
    fingerprint: str
    flags: str
    rows: list[IndexRow]

    @property
    def method(self) -> MethodSpec:
        return MethodSpec.from_flags(self.flags)

    def to_text(self, base: Path | None = None) -> str:
        lines = [f"{INDEX_MAGIC},{self.fingerprint},{self.flags}"]
        for r in self.rows:
            src = Path(os.path.relpath(r.source, base)) if base is not None else r.source
            lines.append(f"{r.id},{r.label},{src.as_posix()},{r.features.to_csv_row()}")
        return "\n".join(lines) + "\n"


def _compute_index(manifest: CorpusManifest, method: MethodSpec, tiling: TilingConfig,
                   threads: int = 1) -> FeatureIndex:
    entries = manifest.tests

    def one(entry):
        img = manifest.load(entry)
        if img.shape != tiling.dims:
            raise ValueError(f"{entry.path}: size {img.shape} does not match tiling {tiling.dims}")
        return IndexRow(entry.path, entry.label, manifest.resolve(entry).resolve(),
                        featurize(img, tiling, method))

    rows = _map(one, entries, threads)
    return FeatureIndex(tiling.fingerprint(), method.flags(), rows)


def build_index(manifest: CorpusManifest, method: MethodSpec, tiling: TilingConfig, out_path,
                threads: int = 1) -> FeatureIndex:
    """Featurize every test entry and write the index atomically."""
    index = _compute_index(manifest, method, tiling, threads)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = out_path.with_name(out_path.name + ".tmp")
    tmp.write_text(index.to_text(out_path.parent.resolve()), encoding="utf-8")
    os.replace(tmp, out_path)
    return index


def read_index(path) -> FeatureIndex:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        magic, _, rest = header.partition(",")
        if magic != INDEX_MAGIC:
            raise ValueError(f"{path}: not a curveret index")
        fingerprint, _, flags = rest.partition(",")
        rows = []
        for fields in csv.reader(fh):
            if not fields:
                continue
            rid, label, src, *feat = fields
            fv = FeatureVector.from_csv_fields(feat)
            if fv.fingerprint != fingerprint:
                raise IncompatibleFeatures(f"{path}: row {rid} has a foreign fingerprint")
            rows.append(IndexRow(rid, label, (path.parent / src).resolve(), fv))
    return FeatureIndex(fingerprint, flags, rows)


# --------------------------------------------------------------------------
# queries
# --------------------------------------------------------------------------

@dataclass
class RankedResult:
    query_id: str
    query_label: str
    ranked: list[tuple[str, str, float]]
    N: int

    def relevance(self) -> list[bool]:
        return [label == self.query_label for _, label, _ in self.ranked]


def rank(query_id: str, query_label: str, fq: FeatureVector,
         candidates: list[tuple[str, str, FeatureVector]]) -> RankedResult:
    scored = [(cid, label, distance(fq, f)) for cid, label, f in candidates]
    scored.sort(key=lambda t: (t[2], t[0]))
    N = sum(label == query_label for _, label, _ in scored)
    return RankedResult(query_id, query_label, scored, N)


def query(query_img: Image, index: FeatureIndex, method: MethodSpec, query_id: str = "query",
          query_label: str = "", tiling: TilingConfig | None = None, threads: int = 1) -> RankedResult:
    """Rank the index against one query image.

    In adaptive mode the tiling is learned on the query and every indexed
    image is re-featurized under it; the stored features are ignored.
    """
    if method.mode != "adaptive":
        if tiling is None:
            J = method.J if method.J is not None else MethodSpec.from_flags(index.flags).J
            if J is None:
                raise ValueError("index does not record J; pass the tiling explicitly")
            tiling = tiling_for(method, query_img.shape, J)
        fq = featurize(query_img, tiling, method)
        if fq.fingerprint != index.fingerprint:
            raise IncompatibleFeatures(
                f"query tiling {fq.fingerprint} does not match index {index.fingerprint}")
        cands = [(r.id, r.label, r.features) for r in index.rows]
        return rank(query_id, query_label, fq, cands)

    cfg = learn_tiling(query_img, method, threads)
    fq = featurize(query_img, cfg, method)
    feats = _map(lambda r: featurize(load_image(r.source), cfg, method), index.rows, threads)
    cands = [(r.id, r.label, f) for r, f in zip(index.rows, feats)]
    return rank(query_id, query_label, fq, cands)


def learn_tiling(img: Image, method: MethodSpec, threads: int = 1) -> TilingConfig:
    cfg = optimize_global(img, method.cost, threads=threads, J=method.J,
                          tune_angles=not method.rotation_normalized)
    return cfg


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

def _relevant_ranks(result: RankedResult) -> list[int]:
    return [i + 1 for i, rel in enumerate(result.relevance()) if rel]


def precision_at(result: RankedResult, k: int) -> float:
    """Relevant items in the top ``k`` divided by ``min(k, N)``."""
    if not 1 <= k <= len(result.ranked):
        raise ValueError(f"k = {k} outside 1..{len(result.ranked)}")
    if result.N < 1:
        raise ValueError("query has no relevant items")
    hits = sum(result.relevance()[:k])
    return hits / min(k, result.N)


def reciprocal_rank(result: RankedResult) -> float:
    ranks = _relevant_ranks(result)
    if not ranks:
        raise ValueError("query has no relevant items")
    return 1.0 / ranks[0]


def average_precision(result: RankedResult) -> float:
    ranks = _relevant_ranks(result)
    if not ranks:
        raise ValueError("query has no relevant items")
    # exact rational sum, rounded once, so the value does not depend on summation order
    return float(sum(Fraction(i + 1, r) for i, r in enumerate(ranks)) / result.N)


def pr_curve(result: RankedResult) -> list[tuple[float, float]]:
    ranks = _relevant_ranks(result)
    if not ranks:
        raise ValueError("query has no relevant items")
    return [((i + 1) / result.N, (i + 1) / r) for i, r in enumerate(ranks)]


METRIC_COLUMNS = ("P@1", "P@2", "P@N", "RR", "AP")


@dataclass
class MetricsReport:
    per_query: list[dict]
    aggregates: dict[str, float]
    pr_curve: list[tuple[float, float]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["query", "class", "N", "first_rank", *METRIC_COLUMNS])
        for row in self.per_query:
            w.writerow([row["query"], row["class"], row["N"], f"{row['first_rank']:.4f}",
                        *(f"{row[c]:.6f}" for c in METRIC_COLUMNS)])
        a = self.aggregates
        w.writerow(["ALL", "", "", "", f"{a['P@1']:.6f}", f"{a['P@2']:.6f}", f"{a['P@N']:.6f}",
                    f"{a['MRR']:.6f}", f"{a['MAP']:.6f}"])
        return buf.getvalue()

    def pr_csv(self) -> str:
        lines = ["recall,precision"] + [f"{r:.6f},{p:.6f}" for r, p in self.pr_curve]
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        a = self.aggregates
        return "  ".join(f"{k}={a[k]:.3f}" for k in ("P@1", "P@2", "P@N", "MRR", "MAP"))


def query_metrics(result: RankedResult) -> dict:
    n = len(result.ranked)
    return {
        "query": result.query_id,
        "class": result.query_label,
        "N": result.N,
        "first_rank": float(_relevant_ranks(result)[0]),
        "P@1": precision_at(result, 1),
        "P@2": precision_at(result, min(2, n)),
        "P@N": precision_at(result, min(result.N, n)),
        "RR": reciprocal_rank(result),
        "AP": average_precision(result),
    }


def mean_pr_curve(results: list[RankedResult]) -> list[tuple[float, float]]:
    """Mean precision over queries on the common recall grid ``{i / N}``.

    With unequal ``N`` the grid is the union of every query's levels and each
    query contributes the precision at its first level reaching that recall.
    """
    curves = [pr_curve(r) for r in results]
    grid = sorted({rec for c in curves for rec, _ in c})
    out = []
    for level in grid:
        vals = [next(p for rec, p in c if rec >= level - 1e-12) for c in curves]
        out.append((level, float(np.mean(vals))))
    return out


def summarize(results: list[RankedResult]) -> MetricsReport:
    rows = [query_metrics(r) for r in results]
    agg = {
        "P@1": float(np.mean([r["P@1"] for r in rows])),
        "P@2": float(np.mean([r["P@2"] for r in rows])),
        "P@N": float(np.mean([r["P@N"] for r in rows])),
        "MRR": float(np.mean([r["RR"] for r in rows])),
        "MAP": float(np.mean([r["AP"] for r in rows])),
    }
    return MetricsReport(rows, agg, mean_pr_curve(results))


def _average_reports(reports: list[MetricsReport]) -> MetricsReport:
    if len(reports) == 1:
        return reports[0]
    rows = []
    for group in zip(*(r.per_query for r in reports)):
        row = dict(group[0])
        for key in ("first_rank", *METRIC_COLUMNS):
            row[key] = float(np.mean([g[key] for g in group]))
        rows.append(row)
    agg = {k: float(np.mean([r.aggregates[k] for r in reports])) for k in reports[0].aggregates}
    pr = [(rec, float(np.mean([r.pr_curve[i][1] for r in reports])))
          for i, (rec, _) in enumerate(reports[0].pr_curve)]
    return MetricsReport(rows, agg, pr)


def run_queries(manifest: CorpusManifest, method: MethodSpec, threads: int = 1) -> list[RankedResult]:
    queries = manifest.queries
    if not queries:
        raise ValueError("manifest has no query entries")
    first = manifest.load(queries[0])
    if method.mode == "adaptive":
        index = FeatureIndex("", method.flags(), [
            IndexRow(e.path, e.label, manifest.resolve(e), None) for e in manifest.tests])
        tiling = None
    else:
        J = resolve_J(method, first)
        method = replace(method, J=J)
        tiling = tiling_for(method, first.shape, J)
        index = _compute_index(manifest, method, tiling, threads)
    return [query(manifest.load(e), index, method, e.path, e.label, tiling=tiling, threads=threads)
            for e in queries]


def evaluate(manifest: CorpusManifest, method: MethodSpec, threads: int = 1) -> MetricsReport:
    """Query every query entry and aggregate P@1, P@2, P@N, MRR, MAP and PR.

    Adaptive mode repeats the experiment once per seed ``base_seed + t``,
    ``t < n_trials``, each run scoring a single noise realization, and
    averages the reports.
    """
    if method.mode != "adaptive":
        return summarize(run_queries(manifest, method, threads))
    reports = []
    for t in range(method.cost.n_trials):
        cost_t = replace(method.cost, n_trials=1, base_seed=method.cost.base_seed + t)
        reports.append(summarize(run_queries(manifest, replace(method, cost=cost_t), threads)))
    return _average_reports(reports)


def write_report(report: MetricsReport, report_dir, title: str = "") -> list[Path]:
    """Write ``metrics.csv``, ``pr_curve.csv`` and ``pr_curve.png``."""
    from .plotting import plot_pr_curve

    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in (("metrics.csv", report.to_csv()), ("pr_curve.csv", report.pr_csv())):
        p = report_dir / name
        tmp = p.with_name(name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, p)
        paths.append(p)
    paths.append(plot_pr_curve(report.pr_curve, report_dir / "pr_curve.png", title=title))
    return paths
