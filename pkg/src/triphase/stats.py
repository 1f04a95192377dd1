"""Population statistics and cross-source comparison of metric distributions.

Provides five-number summaries with outlier flagging (whiskers at
Q1 - 1.5 IQR and Q3 + 1.5 IQR), histograms, Gaussian kernel density
estimates, and pairwise comparison scores between sources: the overlap
fraction of interquartile ranges and the first-order distance between
empirical quantile functions.

Quartiles use linear interpolation of order statistics (the common
"type 7" rule).  Sample standard deviations use the n-1 denominator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricPopulation:
    """Values of one metric for one source, with non-finite entries
    excluded and counted separately."""

    metric: str
    source: str
    values: np.ndarray
    excluded: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.size and not np.all(np.isfinite(v)):
            raise ValueError("population values must be finite; filter via make_population")


def make_population(metric: str, source: str, raw_values) -> MetricPopulation:
    """Build a population, dropping None/non-finite entries into `excluded`."""
    vals = []
    excluded = 0
    for v in raw_values:
        if v is None:
            excluded += 1
            continue
        f = float(v)
        if np.isfinite(f):
            vals.append(f)
        else:
            excluded += 1
    return MetricPopulation(metric, source, np.array(vals, dtype=np.float64), excluded)


@dataclass(frozen=True)
class DistributionSummary:
    n: int
    mean: float
    std: float
    q1: float
    median: float
    q3: float
    iqr: float
    whisker_lo: float
    whisker_hi: float
    outliers: tuple
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    kde_grid: np.ndarray | None
    kde_density: np.ndarray | None
    excluded: int = 0


def histogram(pop: MetricPopulation, bins: int = 24, edges=None):
    """Histogram counts; pass `edges` to share bins across sources."""
    if edges is None:
        if bins < 1:
            raise ValueError("bins must be at least 1")
        lo, hi = float(pop.values.min()), float(pop.values.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(pop.values, bins=edges)
    return np.asarray(edges), counts


def silverman_bandwidth(values: np.ndarray) -> float:
    std = float(np.std(values, ddof=1))
    if std == 0.0:
        raise ValueError("degenerate population: automatic bandwidth needs std > 0")
    return 1.06 * std * len(values) ** (-1.0 / 5.0)


def kde(pop: MetricPopulation, bandwidth: float | None = None, grid_points: int = 256):
    """Gaussian kernel density on a wide grid, renormalized to unit area.

    The grid spans the data range plus three bandwidths on each side; the
    sampled curve is divided by its trapezoid integral so it integrates to
    one on its own grid.
    """
    v = pop.values
    if v.size < 2:
        raise ValueError("kernel density needs at least 2 values")
    h = silverman_bandwidth(v) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    grid = np.linspace(v.min() - 3 * h, v.max() + 3 * h, grid_points)
    z = (grid[:, None] - v[None, :]) / h
    density = np.exp(-0.5 * z * z).sum(axis=1) / (v.size * h * np.sqrt(2 * np.pi))
    density /= np.trapezoid(density, grid)
    return grid, density


def order_quantile(sorted_values: np.ndarray, q: float) -> float:
    """Linear interpolation of order statistics (the "type 7" rule)."""
    n = len(sorted_values)
    if n == 1:
        return float(sorted_values[0])
    h = (n - 1) * q
    lo = int(np.floor(h))
    hi = min(lo + 1, n - 1)
    return float(sorted_values[lo] + (h - lo) * (sorted_values[hi] - sorted_values[lo]))


def summarize(pop: MetricPopulation, bins: int = 24) -> DistributionSummary:
    """Five-number summary, outliers, histogram and KDE for one population."""
    v = pop.values
    if v.size == 0:
        raise ValueError(f"empty population for {pop.metric}/{pop.source}")
    xs = np.sort(v)
    degenerate = xs[0] == xs[-1]
    q1, med, q3 = (order_quantile(xs, q) for q in (0.25, 0.5, 0.75))
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    outliers = tuple(float(x) for x in xs[(xs < lo) | (xs > hi)])
    edges, counts = histogram(pop, bins)
    if v.size >= 2 and not degenerate:
        grid, density = kde(pop)
    else:
        grid, density = None, None
    return DistributionSummary(
        n=int(v.size),
        mean=float(v.mean()),
        std=0.0 if (v.size == 1 or degenerate) else float(np.std(v, ddof=1)),
        q1=q1,
        median=med,
        q3=q3,
        iqr=iqr,
        whisker_lo=lo,
        whisker_hi=hi,
        outliers=outliers,
        hist_edges=edges,
        hist_counts=counts,
        kde_grid=grid,
        kde_density=density,
        excluded=pop.excluded,
    )


def iqr_overlap(a: DistributionSummary, b: DistributionSummary) -> float:
    """|[Q1a,Q3a] intersect [Q1b,Q3b]| / |union| (1 for identical degenerate boxes)."""
    inter = max(0.0, min(a.q3, b.q3) - max(a.q1, b.q1))
    union = (a.q3 - a.q1) + (b.q3 - b.q1) - inter
    if union <= 0.0:
        return 1.0 if (a.q1, a.q3) == (b.q1, b.q3) else 0.0
    return inter / union


def quantile_distance(a_values, b_values) -> float:
    """Area between the two empirical quantile functions.

    Equals the first-order transport distance between the empirical
    distributions; zero iff the sorted samples coincide.
    """
    a = np.sort(np.asarray(a_values, dtype=np.float64))
    b = np.sort(np.asarray(b_values, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("quantile distance needs non-empty samples")
    cuts = np.union1d(
        np.arange(1, a.size) / a.size, np.arange(1, b.size) / b.size
    )
    edges = np.concatenate([[0.0], cuts, [1.0]])
    widths = np.diff(edges)
    mids = (edges[:-1] + edges[1:]) / 2.0
    qa = a[np.minimum((mids * a.size).astype(int), a.size - 1)]
    qb = b[np.minimum((mids * b.size).astype(int), b.size - 1)]
    return float(np.sum(np.abs(qa - qb) * widths))


@dataclass(frozen=True)
class MetricComparison:
    summaries: dict
    pairs: dict  # (source_a, source_b) -> {"iqr_overlap": x, "distance": y}


@dataclass(frozen=True)
class ComparisonReport:
    sources: tuple
    metrics: dict  # metric name -> MetricComparison
    warnings: tuple = ()


def compare(populations, bins: int = 24) -> ComparisonReport:
    """Compare metric populations across sources.

    Populations sharing a metric name are summarized per source and scored
    pairwise; metrics missing from some source are still summarized but
    flagged with a warning.  Requires at least one metric observed by two
    or more sources.
    """
    by_metric: dict = {}
    sources: list = []
    warnings = []
    for pop in populations:
        if pop.source not in sources:
            sources.append(pop.source)
        slot = by_metric.setdefault(pop.metric, {})
        if pop.source in slot:
            raise ValueError(f"duplicate population {pop.metric}/{pop.source}")
        if pop.values.size == 0:
            warnings.append(f"metric {pop.metric} has no finite values for {pop.source}")
            continue
        slot[pop.source] = pop
    by_metric = {m: slot for m, slot in by_metric.items() if slot}
    if not any(len(slot) >= 2 for slot in by_metric.values()):
        raise ValueError("comparison needs at least two sources sharing a metric")
    metrics = {}
    for metric in by_metric:
        slot = by_metric[metric]
        missing = [s for s in sources if s not in slot]
        if missing:
            warnings.append(f"metric {metric} missing from sources: {', '.join(missing)}")
        summaries = {src: summarize(slot[src], bins) for src in slot}
        pairs = {}
        present = [s for s in sources if s in slot]
        for i, sa in enumerate(present):
            for sb in present[i + 1 :]:
                pairs[(sa, sb)] = {
                    "iqr_overlap": iqr_overlap(summaries[sa], summaries[sb]),
                    "distance": quantile_distance(slot[sa].values, slot[sb].values),
                }
        metrics[metric] = MetricComparison(summaries, pairs)
    return ComparisonReport(tuple(sources), metrics, tuple(warnings))
