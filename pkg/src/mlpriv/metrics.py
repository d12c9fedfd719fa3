"""Multilingual compression metrics and their language-pair aggregation.

Four metrics: bidirectional sentence-retrieval precision, linear CKA,
IsoScore, and RSA (rank correlation of representational dissimilarity
matrices), plus the per-language loss fairness gap.

Aggregation conventions: retrieval averages over all ordered language pairs
(q != r); CKA and RSA are symmetric and average over unordered pairs
(q < r); IsoScore is a single pooled value over the concatenation of all
languages' point clouds.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import (
    DegenerateInputError,
    DegenerateInputWarning,
    DimensionTooSmallError,
    InternalConsistencyError,
    LengthMismatchError,
    ShapeMismatchError,
    TooFewLanguagesError,
    TooFewSentencesError,
    ZeroNormRowError,
)
from .repr_store import EmbeddingSet

RANGE_SLACK = 1e-12

AGG_FULL_OFF_DIAGONAL = "full-off-diagonal"
AGG_UPPER_TRIANGLE = "upper-triangle"
AGG_POOLED = "pooled"


@dataclass(frozen=True)
class MetricReport:
    """Per-language-pair metric values plus their aggregate mean."""

    metric: str
    layer: int
    per_pair: dict[tuple[str, str], float]
    aggregate: float
    aggregation: str

    def write_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "lang_a", "lang_b", "layer", "value"])
            for (a, b), v in sorted(self.per_pair.items()):
                writer.writerow([self.metric, a, b, self.layer, format(v, ".17g")])
            writer.writerow([self.metric, "ALL", "ALL", self.layer, format(self.aggregate, ".17g")])


def _clamp_to_range(value: float, lo: float, hi: float, name: str) -> float:
    """Snap tiny floating-point overshoot back into [lo, hi]; reject worse."""
    if lo - RANGE_SLACK * max(1.0, abs(lo)) <= value <= hi + RANGE_SLACK * max(1.0, abs(hi)):
        return min(max(value, lo), hi)
    # give a bit of extra headroom for accumulated rounding in large inputs
    if lo - 1e-9 <= value <= hi + 1e-9:
        return min(max(value, lo), hi)
    raise InternalConsistencyError(f"{name} = {value} outside [{lo}, {hi}]")


def cosine_similarity_matrix(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """R[i, j] = cos(x_i, y_j) for row-aligned matrices of equal shape."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape != Y.shape or X.ndim != 2:
        raise ShapeMismatchError(f"shapes {X.shape} vs {Y.shape}")
    xn = np.linalg.norm(X, axis=1)
    yn = np.linalg.norm(Y, axis=1)
    for which, norms in (("X", xn), ("Y", yn)):
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise ZeroNormRowError(int(zero[0]), which)
    R = (X @ Y.T) / np.outer(xn, yn)
    return np.clip(R, -1.0, 1.0)


def retrieval_precision(X: np.ndarray, Y: np.ndarray) -> float:
    """Bidirectional nearest-neighbour retrieval precision in [0, 1].

    Counts row i as retrieved when its cosine-nearest row in the other
    language is i, in both directions; argmax ties go to the lowest index.
    """
    R = cosine_similarity_matrix(X, Y)
    m = R.shape[0]
    idx = np.arange(m)
    hits = np.count_nonzero(R.argmax(axis=1) == idx)
    hits += np.count_nonzero(R.argmax(axis=0) == idx)
    return hits / (2 * m)


def linear_cka(X: np.ndarray, Y: np.ndarray) -> float:
    """Linear CKA between two row-aligned representation matrices.

    Both matrices are column-centered first; result is in [0, 1].
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ShapeMismatchError(f"row counts differ: {X.shape} vs {Y.shape}")
    if X.shape[0] < 2:
        raise ShapeMismatchError("need at least 2 rows")
    Xc = X - X.mean(axis=0)
    Yc = Y - Y.mean(axis=0)
    x_norm = np.linalg.norm(Xc.T @ Xc)
    y_norm = np.linalg.norm(Yc.T @ Yc)
    if x_norm == 0.0 or y_norm == 0.0:
        raise DegenerateInputError("a centered matrix is entirely zero")
    cross = np.linalg.norm(Yc.T @ Xc) ** 2
    return _clamp_to_range(cross / (x_norm * y_norm), 0.0, 1.0, "linear_cka")


def isoscore(X: np.ndarray) -> float:
    """Isotropy of a point cloud in [0, 1]; 1 = all directions used equally.

    Steps: covariance eigenvalues (the PCA-rotated covariance diagonal),
    normalized to Euclidean norm sqrt(n); isotropy defect as distance to the
    all-ones vector; then the defect is mapped through the fraction of
    dimensions uniformly occupied and rescaled to [0, 1].
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeMismatchError(f"expected points x dims, got shape {X.shape}")
    n_points, n = X.shape
    if n < 2:
        raise DimensionTooSmallError(f"need >= 2 dimensions, got {n}")
    if n_points < 2:
        raise DegenerateInputError("need >= 2 points")
    centered = X - X.mean(axis=0)
    cov = centered.T @ centered / n_points
    eigvals = np.linalg.eigvalsh(cov)
    eigvals = np.maximum(eigvals, 0.0)  # clamp eigenvalue rounding noise
    total = np.linalg.norm(eigvals)
    if total == 0.0:
        raise DegenerateInputError("all points identical (zero covariance)")
    sigma_hat = np.sqrt(n) * eigvals / total
    defect = np.linalg.norm(sigma_hat - 1.0) / np.sqrt(2.0 * (n - np.sqrt(n)))
    phi = (n - defect**2 * (n - np.sqrt(n))) ** 2 / n**2
    iota = (n * phi - 1.0) / (n - 1.0)
    return _clamp_to_range(iota, 0.0, 1.0, "isoscore")


def _ranks(a: np.ndarray) -> np.ndarray:
    return rankdata(a, method="average")


def spearman_rho(a: np.ndarray, b: np.ndarray) -> float:
    """Spearman rank correlation with average-tie ranks.

    A constant rank vector yields 0.0 with a DegenerateInputWarning rather
    than NaN, so corpus-level averages stay finite.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise LengthMismatchError(f"{a.shape} vs {b.shape}")
    if a.size < 2:
        raise LengthMismatchError("need length >= 2")
    ra = _ranks(a)
    rb = _ranks(b)
    da = ra - ra.mean()
    db = rb - rb.mean()
    na = np.linalg.norm(da)
    nb = np.linalg.norm(db)
    if na == 0.0 or nb == 0.0:
        warnings.warn("constant rank vector; reporting rho = 0", DegenerateInputWarning)
        return 0.0
    return _clamp_to_range(float(da @ db / (na * nb)), -1.0, 1.0, "spearman_rho")


def _rdm_upper(X: np.ndarray) -> np.ndarray:
    """Upper triangle (i < j) of the rank-dissimilarity RDM, row-major."""
    m = X.shape[0]
    ranks = np.vstack([_ranks(row) for row in X])
    dev = ranks - ranks.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(dev, axis=1)
    out = []
    for i in range(m):
        for j in range(i + 1, m):
            if norms[i] == 0.0 or norms[j] == 0.0:
                warnings.warn(
                    "constant row ranks in RDM; treating rho as 0",
                    DegenerateInputWarning,
                )
                rho = 0.0
            else:
                rho = float(dev[i] @ dev[j] / (norms[i] * norms[j]))
            out.append(1.0 - rho)
    return np.array(out)


def rsa_score(X: np.ndarray, Y: np.ndarray) -> float:
    """Rank correlation between the representational geometries of X and Y.

    Builds per-matrix RDMs with dissimilarity 1 - Spearman's rho between
    rows, then correlates the vectorized upper triangles.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape != Y.shape or X.ndim != 2:
        raise ShapeMismatchError(f"shapes {X.shape} vs {Y.shape}")
    if X.shape[0] < 3:
        raise TooFewSentencesError(f"RSA needs m >= 3 rows, got {X.shape[0]}")
    return spearman_rho(_rdm_upper(X), _rdm_upper(Y))


def linguistic_fairness_gap(losses: dict[str, float]) -> tuple[float, float]:
    """Population variance and max-min gap of per-language losses."""
    if len(losses) < 2:
        raise TooFewLanguagesError("fairness gap needs >= 2 languages")
    values = np.array(list(losses.values()), dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite loss")
    return float(values.var()), float(values.max() - values.min())


def pairwise_report(embedding_set: EmbeddingSet, metric: str) -> MetricReport:
    """Evaluate one metric over all language pairs of an embedding set.

    Per-pair errors are re-raised with the offending pair named.
    """
    langs = embedding_set.languages
    mats = embedding_set.matrices

    def run(fn, a: int, b: int) -> float:
        try:
            return fn(mats[a], mats[b])
        except Exception as exc:
            exc.args = (f"{exc} [language pair ({langs[a]}, {langs[b]})]",)
            raise

    if metric == "retrieval":
        pairs = {
            (langs[q], langs[r]): run(retrieval_precision, q, r)
            for q in range(len(langs))
            for r in range(len(langs))
            if q != r
        }
        rule = AGG_FULL_OFF_DIAGONAL
    elif metric in ("cka", "rsa"):
        fn = linear_cka if metric == "cka" else rsa_score
        pairs = {
            (langs[q], langs[r]): run(fn, q, r)
            for q in range(len(langs))
            for r in range(q + 1, len(langs))
        }
        rule = AGG_UPPER_TRIANGLE
    elif metric == "isoscore":
        pooled = isoscore(np.vstack(mats))
        return MetricReport(
            metric="isoscore",
            layer=embedding_set.layer,
            per_pair={},
            aggregate=pooled,
            aggregation=AGG_POOLED,
        )
    else:
        raise ValueError(f"unknown metric {metric!r}")

    # mean in fixed lexicographic (q, r) order for bit-reproducibility
    ordered = [pairs[key] for key in sorted(pairs)]
    return MetricReport(
        metric=metric,
        layer=embedding_set.layer,
        per_pair=pairs,
        aggregate=float(np.mean(ordered)),
        aggregation=rule,
    )
