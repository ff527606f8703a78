"""Experiment harness: utility scaling grids and worked-example reproduction.

A config file (INI syntax, sections ``[scenario]``, ``[grid]``, ``[budget]``)
declares a scenario, a parameter grid, and a privacy budget; the driver runs
every (mechanism, n) cell for the configured number of trials and emits CSV
rows with the fixed schema

    scenario,mechanism,n,m,k,alpha,epsilon,delta,trial_count,
    mean_error,std_error,bound,seed

The ``mechanism`` field carries the calibration mode in brackets (e.g.
``gkrr[asymptotic]``) so each row is self-describing. Cell randomness is
derived from (master seed, cell index, trial), so reports are byte-identical
for a given config and seed regardless of how many workers run the grid, and
rows are sorted deterministically before writing.

Scenario types:

* ``frequency`` -- channel-based frequency estimation on a clustered space;
  the error is the earth mover's distance between the simplex-projected
  estimate and the realized pooled histogram, and the bound column is the
  operator-norm error bound (``k/(n*eps)`` for the Laplace baseline).
* ``linear-query`` -- noisy linear embedding queries on a centered embedding;
  the error is the Euclidean distance to the exact query value. The
  metric-DP Gaussian release and the user-level Gaussian surrogate draw
  paired noise, making their mean errors directly comparable.
* ``worked-examples`` -- the budget-setting rule, the expected gamma noise
  magnitude, and the exact shuffle calibration, reproduced as CSV rows.
"""
from __future__ import annotations

import configparser
import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .budget import MetricBudget, Requirement, alpha_from_requirements
from .frequency import (
    freq_error_bound,
    freq_est_local,
    gkrr_mechanism,
    gkrr_params,
    gkrr_right_inverse,
    laplace_freq_central,
    project_to_simplex,
)
from .linear_mech import LinearQuery, NoiseSpec, lipschitz_constant, priv_emd_linear
from .metric_space import ClusteredSpace, build_embedding
from .rng import SeedLike, make_rng, substream
from .shuffle_amp import AmplificationInapplicableError, calibrate_alpha0
from .transport import Histogram, Multiset, emd

CSV_COLUMNS = [
    "scenario", "mechanism", "n", "m", "k", "alpha", "epsilon", "delta",
    "trial_count", "mean_error", "std_error", "bound", "seed",
]

# Substream tags (arbitrary distinct constants).
_TAG_DATA = 11
_TAG_NOISE = 12
_TAG_POP = 13


@dataclass(frozen=True)
class _Cell:
    scenario: str
    mechanism: str
    model: str
    index: int
    n: int
    m: int
    space_spec: str
    d: int
    k: int
    trials: int
    alpha: float | None
    epsilon: float | None
    delta: float | None
    alpha0: float | None
    calibration: str
    seed: int


def user_level_gaussian_baseline(
    query: LinearQuery,
    data: Multiset | Histogram,
    epsilon: float,
    delta: float,
    model: str = "local",
    n: int = 1,
    seed: SeedLike = 0,
) -> np.ndarray:
    """Gaussian release calibrated to worst-case user-level sensitivity.

    A surrogate baseline: the sensitivity of the normalized linear query to
    replacing an entire dataset is bounded by twice the largest column norm
    of the query table (1/n of that in the bounded central model), and
    per-coordinate Gaussian noise of width sensitivity * sqrt(1.25 ln(1/delta))
    / epsilon is added. The noise vector is the first draw from the stream,
    aligning it with the metric-DP Gaussian release for paired comparisons.
    """
    if epsilon <= 0 or not (0.0 < delta < 1.0):
        raise ValueError("need epsilon > 0 and delta in (0, 1)")
    if model not in ("local", "central"):
        raise ValueError("model must be 'local' or 'central'")
    if model == "central" and n < 1:
        raise ValueError("central model requires n >= 1")
    value = query.value(data)
    rng = make_rng(seed)
    z = rng.standard_normal(query.dim)
    sensitivity = 2.0 * float(np.linalg.norm(query.table, axis=0).max())
    if model == "central":
        sensitivity /= n
    sigma = sensitivity * math.sqrt(1.25 * math.log(1.0 / delta)) / epsilon
    return value + sigma * z


def expected_gaussian_norm(sigma: float, d: int) -> float:
    """Exact mean Euclidean norm of N(0, sigma^2 I_d)."""
    return sigma * math.sqrt(2.0) * math.exp(math.lgamma((d + 1) / 2.0) - math.lgamma(d / 2.0))


def load_config(source: str | Mapping[str, Mapping[str, str]]) -> dict:
    """Parse an experiment config from a path or a section mapping."""
    parser = configparser.ConfigParser()
    if isinstance(source, Mapping):
        parser.read_dict(source)
    else:
        with open(source) as fh:
            parser.read_file(fh)
    for section in ("scenario", "grid"):
        if not parser.has_section(section):
            raise ValueError(f"config is missing the [{section}] section")
    cfg = {name: dict(parser.items(name)) for name in parser.sections()}
    cfg.setdefault("budget", {})
    return cfg


def _int_list(text: str) -> list[int]:
    return [int(tok.strip()) for tok in text.split(",") if tok.strip()]


def _build_cells(cfg: dict, seed: int) -> list[_Cell]:
    scenario = cfg["scenario"].get("type", "").strip()
    if scenario not in ("frequency", "linear-query", "worked-examples"):
        raise ValueError(f"unknown scenario type {scenario!r}")
    grid = cfg["grid"]
    budget = cfg.get("budget", {})
    trials = int(grid.get("trials", "0"))
    mechanisms = [tok.strip() for tok in cfg["scenario"].get("mechanisms", "").split(",") if tok.strip()]
    model = cfg["scenario"].get("model", "local").strip()
    alpha = float(budget["alpha"]) if "alpha" in budget else None
    epsilon = float(budget["epsilon"]) if "epsilon" in budget else None
    delta = float(budget["delta"]) if "delta" in budget else None
    alpha0 = float(budget["alpha0"]) if "alpha0" in budget else None
    calibration = budget.get("calibration", "fixed" if alpha0 is not None else "asymptotic")

    cells: list[_Cell] = []
    if trials == 0:
        return cells
    if scenario == "worked-examples":
        for i, name in enumerate(("budget-rule", "gamma-noise", "calibration")):
            cells.append(
                _Cell(scenario, name, model, i, 0, 0, "", 0, 0, trials,
                      alpha, epsilon, delta, alpha0, calibration, seed)
            )
        return cells

    ns = _int_list(grid.get("n", "1"))
    m = int(grid.get("m", "1"))
    if scenario == "frequency":
        space_spec = grid["space"]
        k = _parse_clustered(space_spec).size
        d = 0
    else:
        space_spec = ""
        d = int(grid.get("d", "4"))
        k = int(grid.get("k", "16"))
    index = 0
    for mech in mechanisms:
        for n in ns:
            cells.append(
                _Cell(scenario, mech, model, index, n, m, space_spec, d, k, trials,
                      alpha, epsilon, delta, alpha0, calibration, seed)
            )
            index += 1
    return cells


def _parse_clustered(spec: str) -> ClusteredSpace:
    if not spec.startswith("clustered:"):
        raise ValueError("frequency grids require space = clustered:s,t,r")
    s, t, r = spec.split(":", 1)[1].split(",")
    return ClusteredSpace(int(s), int(t), float(r))


def _format_value(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _row(cell: _Cell, mechanism: str, mean: Any, std: Any, bound: Any) -> dict:
    return {
        "scenario": cell.scenario,
        "mechanism": mechanism,
        "n": cell.n,
        "m": cell.m,
        "k": cell.k,
        "alpha": _format_value(cell.alpha if cell.alpha is not None else cell.alpha0),
        "epsilon": _format_value(cell.epsilon),
        "delta": _format_value(cell.delta),
        "trial_count": cell.trials,
        "mean_error": _format_value(mean),
        "std_error": _format_value(std),
        "bound": _format_value(bound),
        "seed": cell.seed,
    }


def _run_frequency_cell(cell: _Cell) -> dict:
    params = _parse_clustered(cell.space_spec)
    space = params.space()
    pop = substream(cell.seed, _TAG_POP, cell.index).dirichlet(np.ones(params.size))
    label = f"{cell.mechanism}[{cell.calibration}]"

    if cell.mechanism == "laplace":
        if cell.epsilon is None:
            raise ValueError("laplace cells need an epsilon budget")
        label = "laplace[direct]"
        bound = params.size / (cell.n * cell.epsilon)
        errors = np.empty(cell.trials)
        for trial in range(cell.trials):
            data_rng = substream(cell.seed, _TAG_DATA, cell.index, trial)
            pooled = Multiset(space, data_rng.multinomial(cell.m * cell.n, pop))
            estimate, _ = laplace_freq_central(
                pooled, cell.n, cell.epsilon, substream(cell.seed, _TAG_NOISE, cell.index, trial)
            )
            target = pooled.normalize()
            errors[trial], _ = emd(Histogram(space, estimate), target)
        return _row(cell, label, errors.mean(), errors.std(ddof=1), bound)

    if cell.mechanism != "gkrr":
        raise ValueError(f"unknown frequency mechanism {cell.mechanism!r}")
    if cell.calibration == "fixed":
        alpha0 = cell.alpha0
        if alpha0 is None:
            raise ValueError("fixed calibration needs alpha0 in [budget]")
    else:
        if cell.alpha is None or cell.delta is None:
            raise ValueError("calibrated cells need alpha and delta in [budget]")
        alpha0 = calibrate_alpha0(
            MetricBudget(cell.alpha, cell.delta), cell.m, cell.n, cell.model, cell.calibration
        )
    mech = gkrr_mechanism(params.s, params.t, params.r, alpha0)
    inverse = gkrr_right_inverse(gkrr_params(params.s, params.t, params.r, alpha0))
    bound = freq_error_bound(inverse, params.s, params.t, params.r, cell.m, cell.n)
    errors = np.empty(cell.trials)
    for trial in range(cell.trials):
        data_rng = substream(cell.seed, _TAG_DATA, cell.index, trial)
        noise_seed = substream(cell.seed, _TAG_NOISE, cell.index, trial)
        if cell.model == "central":
            pooled = Multiset(space, data_rng.multinomial(cell.m * cell.n, pop))
            users = [pooled]
        else:
            counts = data_rng.multinomial(cell.m, pop, size=cell.n)
            users = [Multiset(space, c) for c in counts]
        estimate = freq_est_local(users, mech, inverse, noise_seed)
        pooled_counts = np.sum([u.counts for u in users], axis=0)
        target = Multiset(space, pooled_counts).normalize()
        errors[trial], _ = emd(Histogram(space, project_to_simplex(estimate)), target)
    return _row(cell, label, errors.mean(), errors.std(ddof=1), bound)


def _linear_cell_space(cell: _Cell) -> tuple[LinearQuery, float]:
    # Embedding on a radius-1/2 sphere with an antipodal pair, so the
    # diameter equals twice the maximum column norm and the metric-DP and
    # user-level Gaussian scales coincide at alpha = epsilon.
    rng = substream(cell.seed, _TAG_POP, 1000)
    vecs = rng.standard_normal((cell.k - 2, cell.d))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    poles = np.zeros((2, cell.d))
    poles[0, 0], poles[1, 0] = 1.0, -1.0
    table = 0.5 * np.vstack([poles, vecs])
    space = build_embedding(table)
    query = LinearQuery(space, table.T)
    return query, lipschitz_constant(query)


def _run_linear_cell(cell: _Cell) -> dict:
    if cell.delta is None:
        raise ValueError("linear-query cells need delta in [budget]")
    query, lip = _linear_cell_space(cell)
    pop = substream(cell.seed, _TAG_POP, 2000).dirichlet(np.ones(cell.k))
    errors = np.empty(cell.trials)
    if cell.mechanism in ("gaussian", "gamma"):
        if cell.alpha is None:
            raise ValueError("metric-DP linear cells need alpha in [budget]")
        noise = NoiseSpec(cell.mechanism, omega=1.0 / cell.alpha, lipschitz=lip, delta=cell.delta)
        sigma = lip / (cell.alpha * cell.n) * math.sqrt(1.25 * math.log(1.0 / cell.delta))
        bound = expected_gaussian_norm(sigma, cell.d) if cell.mechanism == "gaussian" else lip * cell.d / (cell.alpha * cell.n)
        label = f"{cell.mechanism}[direct]"
    elif cell.mechanism == "user-gaussian":
        if cell.epsilon is None:
            raise ValueError("user-gaussian cells need epsilon in [budget]")
        sensitivity = 2.0 * float(np.linalg.norm(query.table, axis=0).max()) / cell.n
        sigma = sensitivity * math.sqrt(1.25 * math.log(1.0 / cell.delta)) / cell.epsilon
        bound = expected_gaussian_norm(sigma, cell.d)
        label = "user-gaussian[direct]"
    else:
        raise ValueError(f"unknown linear mechanism {cell.mechanism!r}")
    for trial in range(cell.trials):
        data_rng = substream(cell.seed, _TAG_DATA, 3000, cell.n, trial)
        pooled = Multiset(query.space, data_rng.multinomial(cell.m * cell.n, pop))
        exact = query.value(pooled)
        noise_seed = substream(cell.seed, _TAG_NOISE, 3000, cell.n, trial)
        if cell.mechanism == "user-gaussian":
            released = user_level_gaussian_baseline(
                query, pooled, cell.epsilon, cell.delta, cell.model, cell.n, noise_seed
            )
        else:
            released = priv_emd_linear(query, pooled, noise, cell.model, cell.n, noise_seed)
        errors[trial] = np.linalg.norm(released - exact)
    return _row(cell, label, errors.mean(), errors.std(ddof=1), bound)


def _run_worked_cell(cell: _Cell) -> dict:
    if cell.mechanism == "budget-rule":
        value = alpha_from_requirements(
            [Requirement(q=0.08, tau=1.0 / 30.0, epsilon_max=0.2), Requirement(q=0.008, tau=1.0, epsilon_max=0.2)]
        )
        return _row(cell, "budget-rule", value, 0.0, 25.0)
    if cell.mechanism == "gamma-noise":
        trials = max(cell.trials, 1)
        rng = substream(cell.seed, _TAG_NOISE, cell.index)
        draws = rng.gamma(shape=1, scale=1.0 / 25.0, size=trials)
        return _row(cell, "gamma-noise", draws.mean(), draws.std(ddof=1), 0.04)
    if cell.mechanism == "calibration":
        alpha0 = calibrate_alpha0(MetricBudget(25.0, 1e-12), m=1000, n=100000, model="central", mode="exact")
        return _row(cell, "calibration[exact]", alpha0, 0.0, 3.0)
    raise ValueError(f"unknown worked example {cell.mechanism!r}")


def _run_cell(cell: _Cell, allow_skip: bool) -> dict:
    try:
        if cell.scenario == "frequency":
            return _run_frequency_cell(cell)
        if cell.scenario == "linear-query":
            return _run_linear_cell(cell)
        return _run_worked_cell(cell)
    except AmplificationInapplicableError:
        if not allow_skip:
            raise
        return _row(cell, f"{cell.mechanism}[{cell.calibration}]", "skipped", "", "")


def run_experiment(
    config: str | Mapping,
    out_path: str | None = None,
    seed: int = 0,
    jobs: int = 1,
    allow_skip: bool = False,
) -> str:
    """Run every grid cell and return (and optionally write) the CSV report."""
    cfg = load_config(config)
    cells = _build_cells(cfg, seed)
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, cells, [allow_skip] * len(cells)))
    else:
        rows = [_run_cell(cell, allow_skip) for cell in cells]
    rows.sort(key=lambda r: (r["scenario"], r["mechanism"], int(r["n"]), int(r["m"]), int(r["k"])))
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    text = buffer.getvalue()
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            fh.write(text)
    return text
