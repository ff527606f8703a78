import csv
import io
import math

import numpy as np
import pytest

from emdp.experiments import (
    CSV_COLUMNS,
    expected_gaussian_norm,
    load_config,
    run_experiment,
    user_level_gaussian_baseline,
)
from emdp.linear_mech import LinearQuery, NoiseSpec, lipschitz_constant, priv_emd_linear
from conftest import random_multiset, random_space


FREQ_CONFIG = {
    "scenario": {"type": "frequency", "mechanisms": "gkrr", "model": "local"},
    "grid": {"n": "20, 40", "m": "10", "space": "clustered:2,2,0.3", "trials": "4"},
    "budget": {"alpha0": "1.0", "delta": "1e-6"},
}


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_zero_trials_gives_header_only():
    cfg = {k: dict(v) for k, v in FREQ_CONFIG.items()}
    cfg["grid"]["trials"] = "0"
    text = run_experiment(cfg, seed=1)
    assert text.strip() == ",".join(CSV_COLUMNS)


def test_report_is_reproducible_and_sorted(tmp_path):
    first = run_experiment(FREQ_CONFIG, seed=9)
    second = run_experiment(FREQ_CONFIG, seed=9)
    assert first == second
    other_seed = run_experiment(FREQ_CONFIG, seed=10)
    assert first != other_seed
    rows = rows_of(first)
    assert [int(r["n"]) for r in rows] == [20, 40]
    out_file = tmp_path / "report.csv"
    run_experiment(FREQ_CONFIG, out_path=str(out_file), seed=9)
    assert out_file.read_text() == first


def test_rows_carry_bound_seed_and_mode():
    rows = rows_of(run_experiment(FREQ_CONFIG, seed=9))
    for row in rows:
        assert float(row["bound"]) > 0.0
        assert row["seed"] == "9"
        assert "[fixed]" in row["mechanism"]
        assert float(row["mean_error"]) <= float(row["bound"])


def test_parallel_jobs_produce_identical_report():
    serial = run_experiment(FREQ_CONFIG, seed=4, jobs=1)
    parallel = run_experiment(FREQ_CONFIG, seed=4, jobs=2)
    assert serial == parallel


def test_infeasible_cell_skip_and_failure():
    cfg = {
        "scenario": {"type": "frequency", "mechanisms": "gkrr", "model": "local"},
        # m = 2 admits no feasible amplification level.
        "grid": {"n": "5", "m": "2", "space": "clustered:2,1,0.3", "trials": "2"},
        "budget": {"alpha": "1.0", "delta": "1e-6", "calibration": "exact"},
    }
    with pytest.raises(Exception):
        run_experiment(cfg, seed=0)
    rows = rows_of(run_experiment(cfg, seed=0, allow_skip=True))
    assert rows[0]["mean_error"] == "skipped"


def test_linear_scenario_paired_agreement():
    cfg = {
        "scenario": {"type": "linear-query", "mechanisms": "gaussian, user-gaussian", "model": "central"},
        "grid": {"n": "50", "m": "10", "d": "6", "k": "12", "trials": "40"},
        "budget": {"alpha": "4", "epsilon": "4", "delta": "1e-6"},
    }
    rows = {r["mechanism"]: r for r in rows_of(run_experiment(cfg, seed=21))}
    metric_err = float(rows["gaussian[direct]"]["mean_error"])
    user_err = float(rows["user-gaussian[direct]"]["mean_error"])
    assert abs(metric_err - user_err) / user_err <= 0.05


def test_worked_examples_scenario():
    cfg = {"scenario": {"type": "worked-examples"}, "grid": {"trials": "20000"}}
    rows = {r["mechanism"]: r for r in rows_of(run_experiment(cfg, seed=2))}
    assert float(rows["budget-rule"]["mean_error"]) == 25.0
    assert 2.1 <= float(rows["calibration[exact]"]["mean_error"]) <= 3.9
    gamma_mean = float(rows["gamma-noise"]["mean_error"])
    assert abs(gamma_mean - 0.04) <= 3 * 0.04 / math.sqrt(20000)


def test_load_config_requires_sections(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\ntype = frequency\n")
    with pytest.raises(ValueError, match="grid"):
        load_config(str(bad))


def test_unknown_scenario_rejected():
    cfg = {"scenario": {"type": "nonsense"}, "grid": {"trials": "1"}}
    with pytest.raises(ValueError, match="unknown scenario"):
        run_experiment(cfg, seed=0)


def test_user_baseline_high_budget_is_exact(rng):
    space = random_space(rng, 6)
    query = LinearQuery(space, rng.standard_normal((3, 6)))
    data = random_multiset(rng, space, 9)
    out = user_level_gaussian_baseline(query, data, epsilon=1e9, delta=1e-6, seed=0)
    assert out == pytest.approx(query.value(data), abs=1e-6)


def test_user_baseline_noise_std_matches_formula(rng):
    space = random_space(rng, 4)
    query = LinearQuery(space, rng.standard_normal((2000, 4)))
    data = random_multiset(rng, space, 5)
    eps, delta = 2.0, 1e-5
    sens = 2.0 * float(np.linalg.norm(query.table, axis=0).max())
    target = sens * math.sqrt(1.25 * math.log(1 / delta)) / eps
    noise = np.concatenate(
        [
            user_level_gaussian_baseline(query, data, eps, delta, seed=i) - query.value(data)
            for i in range(60)
        ]
    )
    assert abs(noise.std(ddof=1) - target) / target <= 0.02


def test_user_baseline_paired_ratio_with_metric_release(rng):
    # With shared seeds both releases use the same standard normal draw, so
    # the error ratio equals the ratio of the noise scales exactly.
    space = random_space(rng, 5)
    query = LinearQuery(space, rng.standard_normal((3, 5)))
    data = random_multiset(rng, space, 7)
    eps = alpha = 2.0
    delta = 1e-6
    lip = lipschitz_constant(query)
    sens = 2.0 * float(np.linalg.norm(query.table, axis=0).max())
    noise = NoiseSpec("gaussian", omega=1 / alpha, lipschitz=lip, delta=delta)
    exact = query.value(data)
    metric_err = np.linalg.norm(priv_emd_linear(query, data, noise, seed=77) - exact)
    user_err = np.linalg.norm(user_level_gaussian_baseline(query, data, eps, delta, seed=77) - exact)
    assert metric_err / user_err == pytest.approx(lip / sens, rel=1e-9)


def test_expected_gaussian_norm_monte_carlo(rng):
    d, sigma = 7, 1.3
    draws = rng.standard_normal((20000, d)) * sigma
    norms = np.linalg.norm(draws, axis=1)
    assert expected_gaussian_norm(sigma, d) == pytest.approx(
        norms.mean(), abs=4 * norms.std() / math.sqrt(len(norms))
    )
