"""Empirical checkers for the structural facts behind the design theory.

Each checker probes a claim that the optimal-design arguments rest on:
cofactor signs of the information matrix, positivity of the generalized
Vandermonde determinants for the three exponential systems, the bound on
how often the variance function can cross a level, gradient consistency,
and the baseline-parameter reduction (an optimal design for all k
parameters is also optimal for the k-1 non-baseline ones). Randomized
trials are seed-deterministic and report failing inputs as witnesses.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numerics
from .design import (
    DesignMeasure,
    d_criterion,
    equivalence_check,
    fisher_info,
    variance_closure,
)
from .models import PK1, PK2, ModelSpec, Params, ParamsPK1, ParamsPK2
from .numerics import Interval

SIGN_DEADBAND = 1e-10
MAX_CROSSINGS = 6

# Randomized draws bracket the usual operating point an order of magnitude
# each way; times are confined to the informative window of the slowest
# rate so the information matrices stay well conditioned.
PK1_RANGES = {"beta1": (1.0, 20.0), "beta2": (0.1, 10.0), "beta3": (0.01, 1.0)}
DOSE_RANGE = (1.0, 10.0)


@dataclass(frozen=True)
class PropertyOutcome:
    name: str
    trials: int
    failures: int
    witnesses: tuple

    def __post_init__(self) -> None:
        if self.failures != len(self.witnesses):
            raise ValueError("failures must equal the number of witnesses")

    @property
    def ok(self) -> bool:
        return self.failures == 0


def random_pk1_params(rng: np.random.Generator) -> ParamsPK1:
    return ParamsPK1(
        beta0=rng.uniform(-1.0, 1.0),
        beta1=rng.uniform(*PK1_RANGES["beta1"]),
        beta2=rng.uniform(*PK1_RANGES["beta2"]),
        beta3=rng.uniform(*PK1_RANGES["beta3"]),
        dose=rng.uniform(*DOSE_RANGE),
    )


def random_pk2_params(rng: np.random.Generator) -> ParamsPK2:
    beta3 = rng.uniform(0.01, 0.5)
    return ParamsPK2(
        beta0=rng.uniform(-1.0, 1.0),
        beta1=rng.uniform(1.0, 20.0),
        beta2=beta3 * rng.uniform(2.0, 10.0),
        beta3=beta3,
        beta4=rng.uniform(0.1, 10.0),
        dose=rng.uniform(*DOSE_RANGE),
    )


def random_pk1_design(
    rng: np.random.Generator, p: ParamsPK1, n_points: int = 4
) -> DesignMeasure:
    """Random design inside the informative window 8/beta3."""
    horizon = 8.0 / p.beta3
    space = Interval(0.0, horizon * 1.25)
    while True:
        ts = np.sort(rng.uniform(0.0, horizon, size=n_points))
        if np.all(np.diff(ts) > 1e-3 * horizon):
            break
    w = rng.dirichlet(np.ones(n_points))
    return DesignMeasure.from_points(zip(ts, w), space)


def check_cofactor_signs(
    xi: DesignMeasure, p: ParamsPK1
) -> tuple[float, float, bool]:
    """Cofactors (1,4) and (2,4) of the bolus-model information matrix.

    Requires at least three distinct strictly positive support times; with
    fewer the minors vanish identically and the sign claim is vacuous.
    Returns (cof14, cof24, ok) with ok true when cof14 > 0 > cof24.
    """
    positive = [t for t in xi.times if t > 0.0]
    if len(positive) < 3:
        raise ValueError(
            "cofactor sign check needs >= 3 distinct positive support times, "
            f"got {len(positive)}"
        )
    p1 = p if p.sigma == 1.0 else dataclasses.replace(p, sigma=1.0)
    m = fisher_info(PK1, xi, p1).m
    cof14 = numerics.cofactor(m, 0, 3)
    cof24 = numerics.cofactor(m, 1, 3)
    return cof14, cof24, bool(cof14 > 0.0 and cof24 < 0.0)


_CHEBYSHEV_SYSTEMS = ("exp-texp", "exp-exp2", "one-t-exp")


def chebyshev_det(
    t1: float, t2: float, t3: float, beta3: float, system: str
) -> float:
    """Generalized Vandermonde determinant of one exponential system.

    Rows are the basis evaluated at the ordered times; each of the three
    systems is total positive, so the determinant must be positive.
    """
    if not (t1 < t2 < t3):
        raise ValueError(f"times must be strictly increasing, got {(t1, t2, t3)}")
    if beta3 <= 0:
        raise ValueError(f"beta3 must be positive, got {beta3}")
    ts = np.array([t1, t2, t3], dtype=float)
    e = np.exp(beta3 * ts)
    if system == "exp-texp":
        rows = np.column_stack([np.ones(3), e, ts * e])
    elif system == "exp-exp2":
        rows = np.column_stack([np.ones(3), e, e**2])
    elif system == "one-t-exp":
        rows = np.column_stack([np.ones(3), ts, e])
    else:
        raise ValueError(f"unknown system {system!r}; expected one of {_CHEBYSHEV_SYSTEMS}")
    return numerics.det(rows)


def count_level_crossings(
    model: ModelSpec,
    xi: DesignMeasure,
    params: Params,
    c_samples: Sequence[float],
    grid_n: int = 100_000,
) -> int:
    """Max sign changes of d(t) + c over the open design interval.

    Counted on a dense grid with a small dead band so tangencies and
    round-off wiggle do not register; the grid resolution caveat applies.
    """
    d = variance_closure(model, xi, params)
    xs = np.linspace(xi.space.lo, xi.space.hi, int(grid_n))[1:-1]
    vals = np.asarray(d(xs), dtype=float)
    worst = 0
    for c in c_samples:
        v = vals + float(c)
        signs = np.where(v > SIGN_DEADBAND, 1, np.where(v < -SIGN_DEADBAND, -1, 0))
        signs = signs[signs != 0]
        crossings = int(np.count_nonzero(np.diff(signs) != 0))
        worst = max(worst, crossings)
    return worst


def check_theorem3_reduction(
    model: ModelSpec, xi_ld: DesignMeasure, params: Params, cert_tol: float = 1e-3
) -> bool:
    """True when the all-parameter optimum also certifies for the k-1
    non-baseline parameters at threshold k-1."""
    interest = tuple(range(1, model.k))
    rep = equivalence_check(model, xi_ld, params, interest=interest, cert_tol=cert_tol)
    return rep.passed


def check_interior_maxima_count(
    model: ModelSpec, xi_ld: DesignMeasure, params: Params, grid_n: int = 4000
) -> int:
    """Number of refined interior local maxima of d for a certified design."""
    d = variance_closure(model, xi_ld, params)
    return len(numerics.find_local_maxima(d, xi_ld.space, grid_n=grid_n))


# ---------------------------------------------------------------------------
# Randomized trial suites
# ---------------------------------------------------------------------------

def run_gradient_checks(
    model: ModelSpec,
    trials: int = 200,
    times_per_trial: int = 20,
    seed: int = 0,
    rel_tol: float = 1e-5,
    abs_floor: float = 1e-8,
) -> PropertyOutcome:
    """Analytic gradients against central finite differences."""
    rng = np.random.default_rng(seed)
    draw = random_pk1_params if model.model_id == "pk1" else random_pk2_params
    failures = []
    for _ in range(trials):
        p = draw(rng)
        horizon = 8.0 / p.beta3
        ts = rng.uniform(0.0, horizon, size=times_per_trial)
        analytic = model.grad(ts, p)
        fd = np.empty_like(analytic)
        for i in range(model.k):
            h = 1e-6 * max(abs(p.beta[i]), 1.0)
            fd[..., i] = (
                model.eta(ts, p.with_beta(i, p.beta[i] + h))
                - model.eta(ts, p.with_beta(i, p.beta[i] - h))
            ) / (2.0 * h)
        err = np.abs(analytic - fd)
        scale = np.maximum(np.abs(analytic), abs_floor / rel_tol)
        if np.any(err > rel_tol * scale):
            failures.append((p, float(err.max())))
    return PropertyOutcome(
        name=f"gradients-{model.model_id}",
        trials=trials,
        failures=len(failures),
        witnesses=tuple(failures),
    )


def run_cofactor_checks(trials: int = 1000, seed: int = 0) -> PropertyOutcome:
    rng = np.random.default_rng(seed)
    failures = []
    for _ in range(trials):
        p = random_pk1_params(rng)
        xi = random_pk1_design(rng, p, n_points=4)
        cof14, cof24, ok = check_cofactor_signs(xi, p)
        if not ok:
            failures.append((p, xi.times, cof14, cof24))
    return PropertyOutcome(
        name="cofactor-signs",
        trials=trials,
        failures=len(failures),
        witnesses=tuple(failures),
    )


def run_chebyshev_checks(trials: int = 1000, seed: int = 0) -> PropertyOutcome:
    rng = np.random.default_rng(seed)
    failures = []
    total = 0
    for _ in range(trials):
        beta3 = rng.uniform(0.01, 1.0)
        horizon = 8.0 / beta3
        ts = np.sort(rng.uniform(0.0, horizon, size=3))
        while np.any(np.diff(ts) < 1e-3):
            ts = np.sort(rng.uniform(0.0, horizon, size=3))
        for system in _CHEBYSHEV_SYSTEMS:
            total += 1
            value = chebyshev_det(*ts, beta3, system)
            if not value > 0.0:
                failures.append((tuple(ts), beta3, system, value))
    return PropertyOutcome(
        name="chebyshev-positivity",
        trials=total,
        failures=len(failures),
        witnesses=tuple(failures),
    )


def run_crossing_checks(
    designs: int = 100, levels: int = 20, grid_n: int = 100_000, seed: int = 0
) -> PropertyOutcome:
    """Level crossings of the bolus-model variance function stay <= 6."""
    rng = np.random.default_rng(seed)
    failures = []
    done = 0
    while done < designs:
        p = random_pk1_params(rng)
        xi = random_pk1_design(rng, p, n_points=int(rng.integers(4, 7)))
        try:
            d = variance_closure(PK1, xi, p)
        except numerics.SingularMatrix:
            continue  # uninformative draw; precondition det M > 0
        done += 1
        xs = np.linspace(xi.space.lo, xi.space.hi, grid_n)[1:-1]
        vals = np.asarray(d(xs), dtype=float)
        span = np.linspace(vals.min(), vals.max(), levels + 2)[1:-1]
        crossings = count_level_crossings(PK1, xi, p, c_samples=-span, grid_n=grid_n)
        if crossings > MAX_CROSSINGS:
            failures.append((p, xi.times, crossings))
    return PropertyOutcome(
        name="level-crossings",
        trials=designs,
        failures=len(failures),
        witnesses=tuple(failures),
    )


def run_invariance_checks(seed: int = 0, trials: int = 20) -> PropertyOutcome:
    """Exact sigma-scaling and baseline-shift invariance of the criteria."""
    rng = np.random.default_rng(seed)
    failures = []
    done = 0
    while done < trials:
        for model in (PK1, PK2):
            p = (random_pk1_params if model.model_id == "pk1" else random_pk2_params)(rng)
            horizon = 8.0 / p.beta3
            space = Interval(0.0, horizon * 1.25)
            ts = np.sort(rng.uniform(0.0, horizon, size=model.k))
            while np.any(np.diff(ts) < 1e-3):
                ts = np.sort(rng.uniform(0.0, horizon, size=model.k))
            xi = DesignMeasure.uniform(ts, space)
            t_probe = float(rng.uniform(0.0, horizon))
            try:
                d1 = variance_closure(model, xi, p)(t_probe)
            except numerics.SingularMatrix:
                continue  # uninformative draw; invariances need invertible M
            det1 = d_criterion(fisher_info(model, xi, p))
            for sigma in (0.5, 2.0):
                ps = dataclasses.replace(p, sigma=sigma)
                det_s = d_criterion(fisher_info(model, xi, ps))
                if det_s != det1 * sigma ** (-2 * model.k):
                    failures.append(("sigma-det", model.model_id, p, sigma))
                if variance_closure(model, xi, ps)(t_probe) != d1:
                    failures.append(("sigma-d", model.model_id, p, sigma))
            shifted = p.with_beta(0, p.beta0 + rng.uniform(-5.0, 5.0))
            if d_criterion(fisher_info(model, xi, shifted)) != det1:
                failures.append(("beta0-det", model.model_id, p))
            if variance_closure(model, xi, shifted)(t_probe) != d1:
                failures.append(("beta0-d", model.model_id, p))
        done += 1
    return PropertyOutcome(
        name="invariances",
        trials=trials,
        failures=len(failures),
        witnesses=tuple(failures),
    )


def run_all(trials: int = 1000, seed: int = 0) -> list[PropertyOutcome]:
    """Full property suite; counts derive from the requested trial budget."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    return [
        run_gradient_checks(PK1, trials=max(trials // 5, 1), seed=seed),
        run_gradient_checks(PK2, trials=max(trials // 5, 1), seed=seed + 1),
        run_cofactor_checks(trials=trials, seed=seed + 2),
        run_chebyshev_checks(trials=trials, seed=seed + 3),
        run_crossing_checks(designs=max(trials // 10, 1), seed=seed + 4),
        run_invariance_checks(seed=seed + 5, trials=max(trials // 50, 1)),
    ]
