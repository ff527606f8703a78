import numpy as np
import pytest

from emdp.cli import parse_space
from emdp.metric_space import MetricSpace, build_clustered
from emdp.shuffle_amp import h_bound
from emdp.transport import Histogram, Multiset, emd, multiset_from_csv


def test_emd_on_single_point_space():
    space = MetricSpace(np.zeros((1, 1)))
    cost, plan = emd(Histogram(space, np.array([1.0])), Histogram(space, np.array([1.0])))
    assert cost == 0.0
    assert plan.joint.tolist() == [[1.0]]


def test_emd_with_sparse_histograms():
    space = build_clustered(2, 2, 0.3)
    p = Histogram(space, np.array([1.0, 0.0, 0.0, 0.0]))
    q = Histogram(space, np.array([0.0, 0.0, 0.0, 1.0]))
    cost, plan = emd(p, q)
    assert cost == pytest.approx(1.0, abs=1e-12)
    plan.check_marginals(p.mass, q.mass)


def test_emd_handles_mass_balance_slack():
    space = build_clustered(2, 1, 0.3)
    # Sum differs from 1 by float slack below the tolerance.
    p = Histogram(space, np.array([0.3, 0.7 + 4e-13]))
    q = Histogram(space, np.array([0.6, 0.4]))
    cost, _ = emd(p, q)
    assert cost == pytest.approx(0.3, abs=1e-9)


def test_h_bound_argument_validation():
    with pytest.raises(ValueError, match="x0"):
        h_bound(10, 20.0, 5.0, 0.1, 1e-6)  # x0 above m
    with pytest.raises(ValueError, match="x0"):
        h_bound(10, 0.0, 5.0, 0.1, 1e-6)
    with pytest.raises(ValueError, match="x1"):
        h_bound(10, 5.0, -1.0, 0.1, 1e-6)
    with pytest.raises(ValueError, match="delta"):
        h_bound(10, 5.0, 1.0, 0.1, 1.5)


def test_multiset_csv_requires_point_index(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("value\n1\n2\n")
    space = build_clustered(2, 1, 0.3)
    with pytest.raises(ValueError, match="point_index"):
        multiset_from_csv(str(bad), space)


def test_parse_space_missing_file():
    with pytest.raises(ValueError, match="not found"):
        parse_space("/nonexistent/space.txt")


def test_multiset_rejects_fractional_counts():
    space = build_clustered(2, 1, 0.3)
    with pytest.raises(ValueError, match="integers"):
        Multiset(space, np.array([1.5, 0.5]))
    # Whole-valued floats are accepted and normalized to integers.
    data = Multiset(space, np.array([2.0, 3.0]))
    assert data.counts.dtype == np.int64 and data.size == 5
