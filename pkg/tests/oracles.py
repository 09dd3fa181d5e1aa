"""Reference metric implementations written from the textbook definitions.

They work on a plain relevance list and share no code with the library.
"""

from fractions import Fraction

from curveret.retrieval import RankedResult


def as_result(relevance, label="q"):
    ranked = [(f"id{i:04d}", label if rel else "other", float(i)) for i, rel in enumerate(relevance)]
    return RankedResult("query", label, ranked, sum(bool(r) for r in relevance))


def precision_at(relevance, k):
    N = sum(relevance)
    return sum(1 for r in relevance[:k] if r) / min(k, N)


def reciprocal_rank(relevance):
    for position, r in enumerate(relevance, start=1):
        if r:
            return 1.0 / position
    raise ValueError("no relevant item")


def average_precision(relevance):
    N = sum(relevance)
    total, hits = Fraction(0), 0
    for k in range(1, len(relevance) + 1):
        if relevance[k - 1]:
            hits += 1
            total += Fraction(hits, k)
    return float(total / N)


def pr_points(relevance):
    N = sum(relevance)
    out, hits = [], 0
    for k, r in enumerate(relevance, start=1):
        if r:
            hits += 1
            out.append((hits / N, hits / k))
    return out
