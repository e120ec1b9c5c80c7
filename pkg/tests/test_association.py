import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impute_forge.association import (
    AssociationMeasure,
    DegenerateSeriesWarning,
    association_matrix,
    association_profile,
    cramers_v,
    cramers_v_from_table,
    eta_ratio,
    measure_for,
    pearson_r,
)
from impute_forge.dataset import ColumnKind
from impute_forge.exceptions import UnknownFeature

from . import oracles
from .helpers import make_dataset


def test_pearson_examples():
    assert pearson_r([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson_r([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)
    assert pearson_r([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    with pytest.warns(DegenerateSeriesWarning):
        assert pearson_r([1, 2, 3], [5, 5, 5]) == 0.0
    with pytest.warns(DegenerateSeriesWarning):
        assert pearson_r([1], [2]) == 0.0


def test_cramers_v_examples():
    assert cramers_v_from_table([[10, 0], [0, 10]]) == pytest.approx(1.0)
    assert cramers_v_from_table([[5, 5], [5, 5]]) == pytest.approx(0.0)
    # chi2 = 20/3 by hand, n = 60
    assert cramers_v_from_table([[10, 20], [20, 10]]) == pytest.approx(1 / 3)
    with pytest.warns(DegenerateSeriesWarning):
        assert cramers_v(["a", "a", "a"], ["x", "y", "x"]) == 0.0


def test_eta_examples():
    assert eta_ratio(["A", "A", "B", "B"], [1, 1, 3, 3]) == pytest.approx(1.0)
    assert eta_ratio(["A", "A", "B", "B"], [1, 2, 1, 2]) == pytest.approx(0.0)
    assert eta_ratio(["A"] * 3 + ["B"] * 3, [1, 2, 3, 2, 3, 4]) == pytest.approx(math.sqrt(1.5 / 5.5))
    with pytest.warns(DegenerateSeriesWarning):
        assert eta_ratio(["A", "B"], [4, 4]) == 0.0


def test_measure_dispatch():
    num, cat = ColumnKind.NUMERICAL, ColumnKind.CATEGORICAL
    assert measure_for(num, num) is AssociationMeasure.PEARSON_R
    assert measure_for(cat, cat) is AssociationMeasure.CRAMERS_V
    assert measure_for(cat, num) is AssociationMeasure.ETA_RATIO
    assert measure_for(num, cat) is AssociationMeasure.ETA_RATIO


def test_matrix_identity_column():
    d = make_dataset({"x": [1, 2, 3, 4], "z": [1, 2, 3, 4], "y": ["a", "b", "a", "b"]},
                     {"x": "numerical", "z": "numerical"}, "y")
    m = association_matrix(d)
    assert m.get("x", "z") == pytest.approx(1.0)
    assert np.allclose(np.diag(m.values), 1.0)


def test_matrix_support_and_degenerate_pair():
    d = make_dataset(
        {"a": [1, 2, 3, 4], "b": [None, None, None, 7], "y": ["p", "q", "p", "q"]},
        {"a": "numerical", "b": "numerical"}, "y")
    with pytest.warns(DegenerateSeriesWarning):
        m = association_matrix(d)
    i, j = m.index("a"), m.index("b")
    assert m.support[i, j] == 1
    assert m.values[i, j] == 0.0 and m.degenerate[i, j]


def test_profile_order_and_ties():
    d = make_dataset({"a": ["x", "y", "x", "y"], "b": ["x", "y", "x", "y"], "c": ["x", "y", "x", "y"],
                      "y": ["1", "0", "1", "0"]}, {}, "y")
    p = association_profile(association_matrix(d), "a")
    # all three candidates have V = 1; column order decides
    assert p.predictors == ["b", "c", "y"]
    with pytest.raises(UnknownFeature):
        association_profile(association_matrix(d), "nope")


def test_profile_excludes_self_and_includes_target(tiny):
    p = association_profile(association_matrix(tiny), "flyer")
    assert "flyer" not in p.predictors and "y" in p.predictors
    assert p.strengths == sorted(p.strengths, reverse=True)


def _random_dataset(rng, n_rows, n_cols):
    cols, kinds = {}, {}
    for c in range(n_cols - 1):
        name = f"c{c}"
        if rng.random() < 0.5:
            vals = list(rng.integers(0, 6, size=n_rows).astype(float))
            kinds[name] = "numerical"
        else:
            vals = [str(v) for v in rng.choice(list("pqrs"), size=n_rows)]
        # sprinkle missing cells
        for i in range(n_rows):
            if rng.random() < 0.1:
                vals[i] = None
        cols[name] = vals
    labels = [str(v) for v in rng.choice(["0", "1"], size=n_rows)]
    labels[0], labels[1] = "0", "1"
    cols["y"] = labels
    return make_dataset(cols, kinds, "y")


def oracle_value(d, a, b):
    ka, kb = d.column_schema(a).kind, d.column_schema(b).kind
    keep = ~(d.missing(a) | d.missing(b))
    xa = [v for v, k in zip(d.column(a).tolist(), keep) if k]
    xb = [v for v, k in zip(d.column(b).tolist(), keep) if k]
    if len(xa) < 2:
        return 0.0
    if ka is ColumnKind.NUMERICAL and kb is ColumnKind.NUMERICAL:
        return oracles.pearson(xa, xb)
    if ka is ColumnKind.CATEGORICAL and kb is ColumnKind.CATEGORICAL:
        return oracles.cramers_v(xa, xb)
    if ka is ColumnKind.CATEGORICAL:
        return oracles.eta(xa, xb)
    return oracles.eta(xb, xa)


def test_matrix_matches_brute_force_oracle():
    rng = np.random.default_rng(11)
    for _ in range(20):
        d = _random_dataset(rng, int(rng.integers(5, 21)), 4)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateSeriesWarning)
            m = association_matrix(d)
        for a in d.names:
            for b in d.names:
                if a != b:
                    assert m.get(a, b) == pytest.approx(oracle_value(d, a, b), abs=1e-9)


def test_matches_scipy_chi2():
    from scipy.stats import chi2_contingency

    rng = np.random.default_rng(3)
    for _ in range(10):
        table = rng.integers(1, 30, size=(3, 4))
        chi2 = chi2_contingency(table, correction=False)[0]
        expected = math.sqrt(chi2 / (table.sum() * 2))
        assert cramers_v_from_table(table) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_symmetry_range_permutation(seed):
    rng = np.random.default_rng(seed)
    d = _random_dataset(rng, 15, 4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSeriesWarning)
        m = association_matrix(d)
        perm = rng.permutation(d.n_rows)
        shuffled = association_matrix(d.take(perm))
    assert np.allclose(m.values, m.values.T)
    assert ((m.values >= 0) & (m.values <= 1)).all()
    assert np.allclose(m.values, shuffled.values, atol=1e-12)


def test_pairwise_exclusion():
    """A pair's entry ignores rows missing in either column, whatever they hold elsewhere."""
    base = {"a": [1, 2, 3, 4, 5], "b": [2, 1, 4, 3, 6], "c": ["x", "y", "x", "y", "x"], "y": ["0", "1", "0", "1", "0"]}
    extra = {k: v + [v[0]] for k, v in base.items()}
    extra["a"][-1] = None
    extra["c"][-1] = "z"
    kinds = {"a": "numerical", "b": "numerical"}
    m1 = association_matrix(make_dataset(base, kinds, "y"))
    m2 = association_matrix(make_dataset(extra, kinds, "y"))
    assert m1.get("a", "b") == pytest.approx(m2.get("a", "b"), abs=1e-12)
    assert m1.get("a", "c") == pytest.approx(m2.get("a", "c"), abs=1e-12)


def test_travel_profile_shape(travel):
    p = association_profile(association_matrix(travel), "FrequentFlyer")
    assert len(p) == 6
    assert p.strengths == sorted(p.strengths, reverse=True)
