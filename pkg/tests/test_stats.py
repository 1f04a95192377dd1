import numpy as np
import pytest

from triphase.report import emit_report, report_to_csv, report_to_json
from triphase.stats import (
    MetricPopulation,
    compare,
    histogram,
    iqr_overlap,
    kde,
    make_population,
    quantile_distance,
    summarize,
)

from oracles import bf_five_number


def _pop(values, metric="m", source="a"):
    return MetricPopulation(metric, source, np.asarray(values, dtype=float))


# --- summaries -------------------------------------------------------------------

def test_quartiles_one_to_nine():
    s = summarize(_pop(range(1, 10)))
    assert (s.q1, s.median, s.q3) == (3.0, 5.0, 7.0)
    assert s.whisker_lo == 3.0 - 1.5 * 4.0
    assert s.whisker_hi == 7.0 + 1.5 * 4.0


def test_constant_population():
    s = summarize(_pop([4.2] * 10))
    assert s.std == 0.0 and s.iqr == 0.0 and s.outliers == ()


def test_outlier_with_zero_iqr():
    s = summarize(_pop([0, 0, 0, 0, 100]))
    assert s.q1 == s.q3 == 0.0
    assert s.outliers == (100.0,)


def test_single_value_population():
    s = summarize(_pop([3.5]))
    assert s.n == 1 and s.std == 0.0 and s.median == 3.5


def test_summary_matches_sort_oracle_random():
    rng = np.random.default_rng(40)
    for _ in range(200):
        n = int(rng.integers(1, 50))
        vals = rng.normal(0, 10, n)
        s = summarize(_pop(vals))
        q1, med, q3, lo, hi = bf_five_number(vals)
        assert (s.q1, s.median, s.q3) == (q1, med, q3)
        assert (s.whisker_lo, s.whisker_hi) == (lo, hi)
        expected_out = tuple(sorted(v for v in vals if v < lo or v > hi))
        assert s.outliers == expected_out


def test_make_population_excludes_non_finite():
    pop = make_population("m", "a", [1.0, None, float("nan"), 2.0])
    assert list(pop.values) == [1.0, 2.0]
    assert pop.excluded == 2


# --- histogram -------------------------------------------------------------------

def test_histogram_counts_sum():
    rng = np.random.default_rng(41)
    vals = rng.random(137)
    edges, counts = histogram(_pop(vals), bins=12)
    assert counts.sum() == 137
    assert len(edges) == 13


def test_histogram_single_value():
    edges, counts = histogram(_pop([2.0] * 9), bins=8)
    assert counts.sum() == 9
    assert (counts > 0).sum() == 1


def test_histogram_uniform_grid_equal_counts():
    vals = np.repeat(np.arange(8) + 0.5, 5)  # 5 values centered in each of 8 bins
    edges, counts = histogram(_pop(vals), bins=8, edges=np.arange(9.0))
    assert np.array_equal(counts, np.full(8, 5))


# --- KDE -------------------------------------------------------------------------

def test_kde_normalization():
    rng = np.random.default_rng(42)
    grid, density = kde(_pop(rng.normal(0, 1, 200)))
    assert abs(np.trapezoid(density, grid) - 1.0) <= 1e-6
    assert np.all(density >= 0)


def test_kde_unimodal_peak_near_mean():
    rng = np.random.default_rng(43)
    half = rng.normal(5.0, 0.2, 200)
    vals = np.concatenate([half, 10.0 - half])  # symmetric about 5
    grid, density = kde(_pop(vals))
    peak = grid[np.argmax(density)]
    assert abs(peak - vals.mean()) <= (grid[1] - grid[0]) + 1e-9


def test_kde_bimodal_two_maxima():
    rng = np.random.default_rng(44)
    vals = np.concatenate([rng.normal(0, 0.1, 200), rng.normal(10, 0.1, 200)])
    grid, density = kde(_pop(vals))
    interior = (density[1:-1] > density[:-2]) & (density[1:-1] > density[2:])
    assert interior.sum() == 2


def test_kde_bandwidth_monotone_in_std():
    from triphase.stats import silverman_bandwidth

    rng = np.random.default_rng(45)
    narrow = silverman_bandwidth(rng.normal(0, 1, 100))
    wide = silverman_bandwidth(rng.normal(0, 5, 100))
    assert wide > narrow


def test_kde_rejects_degenerate():
    with pytest.raises(ValueError, match="degenerate|at least 2"):
        kde(_pop([1.0, 1.0, 1.0]))


# --- comparison ------------------------------------------------------------------

def test_self_comparison_perfect():
    rng = np.random.default_rng(46)
    vals = rng.normal(0, 1, 100)
    report = compare([_pop(vals, source="a"), _pop(vals, source="b")])
    scores = report.metrics["m"].pairs[("a", "b")]
    assert scores["iqr_overlap"] == 1.0
    assert scores["distance"] == 0.0


def test_disjoint_ranges_zero_overlap():
    a = _pop([0, 1, 2, 3], source="a")
    b = _pop([10, 11, 12, 13], source="b")
    report = compare([a, b])
    assert report.metrics["m"].pairs[("a", "b")]["iqr_overlap"] == 0.0


def test_distance_two_normal_samples():
    rng = np.random.default_rng(47)
    a = _pop(rng.normal(0, 1, 300), source="a")
    b = _pop(rng.normal(0, 1, 300), source="b")
    d = compare([a, b]).metrics["m"].pairs[("a", "b")]["distance"]
    assert d < 0.15


def test_distance_equals_mean_abs_sorted_diff_for_equal_n():
    rng = np.random.default_rng(48)
    a, b = rng.normal(0, 1, 64), rng.normal(1, 2, 64)
    expect = np.abs(np.sort(a) - np.sort(b)).mean()
    assert quantile_distance(a, b) == pytest.approx(expect, rel=1e-12)


def test_distance_shift_invariance_property():
    rng = np.random.default_rng(49)
    a = rng.normal(0, 1, 50)
    assert quantile_distance(a, a + 2.0) == pytest.approx(2.0, rel=1e-9)


def test_compare_requires_shared_metric():
    with pytest.raises(ValueError, match="two sources"):
        compare([_pop([1, 2], metric="x", source="a"), _pop([1, 2], metric="y", source="b")])


def test_compare_skips_all_excluded_population():
    # a metric whose entries are all non-percolating drops out with a warning
    pops = [
        _pop([1, 2, 3], metric="x", source="a"),
        _pop([2, 3, 4], metric="x", source="b"),
        make_population("tau_dead", "a", [None, None]),
        make_population("tau_dead", "b", [None, None]),
    ]
    report = compare(pops)
    assert "tau_dead" not in report.metrics
    assert sum("tau_dead" in w for w in report.warnings) == 2


def test_compare_warns_on_missing_metric():
    pops = [
        _pop([1, 2, 3], metric="x", source="a"),
        _pop([1, 2, 3], metric="x", source="b"),
        _pop([4, 5, 6], metric="y", source="a"),
    ]
    report = compare(pops)
    assert any("y" in w for w in report.warnings)
    assert "y" in report.metrics


# --- report emission -------------------------------------------------------------

def _toy_report():
    rng = np.random.default_rng(50)
    pops = []
    for metric in ("alpha", "beta"):
        for src, mu in (("original", 0.0), ("ellipsoid", 0.3)):
            pops.append(_pop(rng.normal(mu, 1, 80), metric=metric, source=src))
    return compare(pops)


def test_emit_report_deterministic(tmp_path):
    report = _toy_report()
    d1, d2 = tmp_path / "r1", tmp_path / "r2"
    emit_report(report, d1)
    emit_report(report, d2)
    for p1 in sorted(d1.iterdir()):
        p2 = d2 / p1.name
        assert p1.read_bytes() == p2.read_bytes()


def test_emit_report_file_set(tmp_path):
    report = _toy_report()
    paths = emit_report(report, tmp_path)
    names = {p.name for p in paths}
    assert names == {
        "report.csv", "report.json",
        "hist_alpha.svg", "box_alpha.svg",
        "hist_beta.svg", "box_beta.svg",
    }
    for p in paths:
        if p.suffix == ".svg":
            text = p.read_text()
            assert text.startswith("<svg ") and text.rstrip().endswith("</svg>")


def test_report_csv_layout():
    report = _toy_report()
    text = report_to_csv(report)
    lines = text.strip().split("\n")
    assert lines[0].startswith("metric,source,n,")
    assert len(lines) == 1 + 2 * 2  # two metrics x two sources


def test_report_json_roundtrip():
    import json

    report = _toy_report()
    doc = json.loads(report_to_json(report))
    assert doc["schema_version"] == 1
    assert set(doc["metrics"]) == {"alpha", "beta"}
    pair = doc["metrics"]["alpha"]["pairs"][0]
    assert {"a", "b", "iqr_overlap", "distance"} <= set(pair)


def test_empty_report_csv_header_only():
    # a report over one shared metric still writes rows; an empty metrics
    # dict is representable and yields just the header
    from triphase.stats import ComparisonReport

    text = report_to_csv(ComparisonReport(("a",), {}))
    assert text == CSV_HEADER_LINE


CSV_HEADER_LINE = (
    "metric,source,n,excluded,mean,std,q1,median,q3,iqr,"
    "whisker_lo,whisker_hi,n_outliers\n"
)
