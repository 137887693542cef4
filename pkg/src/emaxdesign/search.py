"""Two-step search for locally D-optimal designs.

Step one finds the best n-point uniform design by multistart simplex
ascent on log det M over the free support times, with boundary points
pinned where the model's structure demands them (both ends for the bolus
model, the left end only for the absorption model). Step two refines that
design with the sequential vertex-exchange algorithm: the point where the
standardized variance d(t) is largest receives mass

    alpha = (d* - k) / (k * (d* - 1)),

the closed-form step that maximizes the one-point determinant update, and
mass is withdrawn from the worst support point by the mirror-image step
whenever doing so increases the determinant. Iteration stops once
sup d <= k * (1 + cert_tol); the determinant never decreases along the way.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import numerics
from .design import (
    DesignMeasure,
    EquivalenceReport,
    d_criterion,
    equivalence_check,
    fisher_info,
    variance_closure,
)
from .models import ModelSpec, Params
from .numerics import Interval

MONOTONE_SLACK = 1e-12


class SingularThroughout(RuntimeError):
    """No multistart produced a design with positive determinant."""


class EmptyDesign(ValueError):
    """Support collapse removed every point."""


@dataclass(frozen=True)
class SearchConfig:
    """Knobs for both search steps; defaults reproduce the standard runs.

    fix_right=None defers to the model: the bolus model keeps both
    boundaries in its support, the absorption model only the left one.
    """

    n_points: int | None = None
    fix_left: bool = True
    fix_right: bool | None = None
    multistarts: int = 16
    tol_t: float = 1e-4
    cert_tol: float = 1e-3
    max_iter: int = 5000
    merge_tol: float = 0.05
    drop_weight: float = 1e-4
    grid_n: int = 4000
    seed: int = 0


@dataclass(frozen=True)
class SearchResult:
    design: DesignMeasure
    criterion: float
    report: EquivalenceReport
    iterations: int
    converged: bool


def _resolve_pins(model: ModelSpec, cfg: SearchConfig) -> tuple[bool, bool]:
    fix_right = cfg.fix_right if cfg.fix_right is not None else model.model_id == "pk1"
    return cfg.fix_left, fix_right


def collapse_support(
    xi: DesignMeasure, merge_tol: float, drop_weight: float
) -> DesignMeasure:
    """Merge clustered support points and drop negligible weights.

    Consecutive points closer than merge_tol chain into one group whose
    location is the weight-averaged mean; groups lighter than drop_weight
    are removed and the rest renormalized.
    """
    groups: list[tuple[float, float]] = []
    cur_t, cur_w = xi.times[0], xi.weights[0]
    mean_t = cur_t
    for t, w in zip(xi.times[1:], xi.weights[1:]):
        if t - cur_t < merge_tol:
            total = cur_w + w
            mean_t = (mean_t * cur_w + t * w) / total
            cur_t, cur_w = t, total
        else:
            groups.append((mean_t, cur_w))
            cur_t, cur_w, mean_t = t, w, t
    groups.append((mean_t, cur_w))

    kept = [(t, w) for t, w in groups if w >= drop_weight]
    if not kept:
        raise EmptyDesign("all support points fell below the drop threshold")
    total = sum(w for _, w in kept)
    return DesignMeasure.from_points(((t, w / total) for t, w in kept), xi.space)


def _log_objective(model, params, space, n, fix_left, fix_right, min_gap):
    """log det of the unnormalized uniform-weight information matrix.

    sigma is dropped here; it rescales the determinant without moving the
    argmax, which searches at different sigma must (and do) agree on.
    """
    lo, hi = space.lo, space.hi
    head = [lo] if fix_left else []
    tail = [hi] if fix_right else []

    def obj(x: np.ndarray) -> float:
        ts = np.concatenate([head, np.sort(np.clip(x, lo, hi)), tail])
        gaps = np.diff(ts)
        violation = float(np.sum(np.maximum(min_gap - gaps, 0.0)))
        if violation > 0.0:
            return -1e12 * (1.0 + violation)
        g = model.grad(ts, params)
        sign, logdet = np.linalg.slogdet(g.T @ g / n)
        if sign <= 0 or not np.isfinite(logdet):
            return -1e12
        return float(logdet)

    return obj


def _start_points(rng, m: int, space: Interval, n_starts: int) -> list[np.ndarray]:
    """Deterministic even and log-spaced seeds plus a Latin hypercube."""
    lo, hi = space.lo, space.hi
    span = hi - lo
    starts = [lo + span * (np.arange(1, m + 1) / (m + 1.0))]
    starts.append(lo + np.geomspace(span * 2e-3, span * 0.9, m))
    for _ in range(n_starts):
        u = (rng.permutation(m) + rng.uniform(size=m)) / m
        starts.append(lo + span * np.sort(u))
    return starts


def uniform_ld_search(
    model: ModelSpec,
    params: Params,
    space: Interval,
    cfg: SearchConfig | None = None,
) -> SearchResult:
    """Best n-point uniform design by multistart simplex over free times."""
    cfg = cfg or SearchConfig()
    n = cfg.n_points or model.k
    if n < model.k:
        raise ValueError(f"n_points={n} below the parameter count k={model.k}")
    fix_left, fix_right = _resolve_pins(model, cfg)
    n_free = n - int(fix_left) - int(fix_right)
    obj = _log_objective(
        model, params, space, n, fix_left, fix_right, min_gap=max(cfg.tol_t, 1e-6)
    )

    if n_free == 0:
        best_x = np.empty(0)
        best_val = obj(best_x)
        total_iter = 0
    else:
        rng = np.random.default_rng(cfg.seed)
        bounds = [space] * n_free
        best_x, best_val, total_iter = None, -np.inf, 0
        for x0 in _start_points(rng, n_free, space, cfg.multistarts):
            res = numerics.maximize_multivariate(
                obj, x0, bounds, tol=cfg.tol_t * 0.1
            )
            total_iter += res.iterations
            x_sorted = np.sort(np.clip(res.x, space.lo, space.hi))
            first = x_sorted[0] if len(x_sorted) else space.lo
            better = res.fval > best_val or (
                res.fval == best_val
                and best_x is not None
                and first < best_x[0]
            )
            if best_x is None or better:
                best_x, best_val = x_sorted, res.fval

    if best_val <= -1e11:
        raise SingularThroughout("every start produced a singular design")

    times = list(best_x)
    if fix_left:
        times.insert(0, space.lo)
    if fix_right:
        times.append(space.hi)
    design = DesignMeasure.uniform(times, space)
    report = equivalence_check(
        model, design, params, grid_n=cfg.grid_n, cert_tol=cfg.cert_tol
    )
    return SearchResult(
        design=design,
        criterion=d_criterion(fisher_info(model, design, params)),
        report=report,
        iterations=total_iter,
        converged=report.passed,
    )


def _argmax_variance(d, space: Interval, grid_n: int) -> tuple[float, float]:
    """Largest d(t) over grid plus a golden refinement of the top bracket."""
    xs = np.linspace(space.lo, space.hi, grid_n)
    vals = np.asarray(d(xs), dtype=float)
    i = int(np.argmax(vals))
    t_star, d_star = float(xs[i]), float(vals[i])
    if 0 < i < grid_n - 1:
        x, v = numerics._golden_max(d, float(xs[i - 1]), float(xs[i + 1]), numerics.GOLDEN_TOL)
        if v > d_star:
            t_star, d_star = x, v
    return t_star, d_star


def _mix(xi: DesignMeasure, t_new: float, alpha: float) -> DesignMeasure:
    """(1 - alpha) xi + alpha * delta_{t_new}; merges exact coincidences."""
    pts = {t: w * (1.0 - alpha) for t, w in zip(xi.times, xi.weights)}
    pts[t_new] = pts.get(t_new, 0.0) + alpha
    total = sum(pts.values())
    return DesignMeasure.from_points(
        ((t, w / total) for t, w in pts.items() if w > 0.0), xi.space
    )


def _downweight(xi: DesignMeasure, j: int, k: int, d_j: float) -> DesignMeasure | None:
    """Withdraw mass from support point j by the mirror of the add step.

    The step is capped at full removal of the point. Returns None when the
    resulting measure is degenerate.
    """
    w_j = xi.weights[j]
    alpha = (d_j - k) / (k * (d_j - 1.0))
    alpha = max(alpha, -w_j / (1.0 - w_j))
    if alpha >= 0.0:
        return None
    new = [(t, w * (1.0 - alpha)) for t, w in zip(xi.times, xi.weights)]
    t_j = xi.times[j]
    new[j] = (t_j, new[j][1] + alpha)
    kept = [(t, w) for t, w in new if w > 1e-16]
    if len(kept) < xi.n - 1 or not kept:
        return None
    total = sum(w for _, w in kept)
    return DesignMeasure.from_points(((t, w / total) for t, w in kept), xi.space)


def fedorov_v(
    model: ModelSpec,
    params: Params,
    space: Interval,
    init: DesignMeasure,
    cfg: SearchConfig | None = None,
) -> SearchResult:
    """Sequential vertex-exchange refinement from a nonsingular start."""
    cfg = cfg or SearchConfig()
    k = model.k
    cur = init
    det_cur = d_criterion(fisher_info(model, cur, params))
    if det_cur <= 0.0:
        raise ValueError("initial design has det M = 0; cannot refine")

    iterations = 0
    converged = False
    while iterations < cfg.max_iter:
        d = variance_closure(model, cur, params)
        t_star, d_star = _argmax_variance(d, space, cfg.grid_n)
        if d_star <= k * (1.0 + cfg.cert_tol):
            converged = True
            break
        iterations += 1

        alpha = (d_star - k) / (k * (d_star - 1.0))
        mixed = _mix(cur, t_star, alpha)
        det_mixed = d_criterion(fisher_info(model, mixed, params))
        if det_mixed < det_cur * (1.0 - MONOTONE_SLACK):
            raise RuntimeError(
                f"determinant decreased on exchange step {iterations}: "
                f"{det_cur!r} -> {det_mixed!r}"
            )
        cur, det_cur = mixed, det_mixed

        # Mirror step: pull mass off the least informative support point
        # when that raises the determinant. This is what drives stray
        # support left over from a poor start to zero in finite time.
        d_mid = variance_closure(model, cur, params)
        d_support = np.asarray(d_mid(np.asarray(cur.times)), dtype=float)
        j = int(np.argmin(d_support))
        if d_support[j] < k:
            candidate = _downweight(cur, j, k, float(d_support[j]))
            if candidate is not None:
                det_cand = d_criterion(fisher_info(model, candidate, params))
                if det_cand >= det_cur * (1.0 - MONOTONE_SLACK):
                    cur, det_cur = candidate, det_cand

        cur = collapse_support(cur, cfg.merge_tol, cfg.drop_weight)
        det_cur = d_criterion(fisher_info(model, cur, params))

    cur = collapse_support(cur, cfg.merge_tol, cfg.drop_weight)
    if converged:
        extracted = _extract_saturated_support(model, params, space, cur, cfg)
        if extracted is not None:
            extracted = _polish_saturated(model, params, space, extracted, cfg)
            rep = equivalence_check(
                model, extracted, params, grid_n=cfg.grid_n, cert_tol=cfg.cert_tol
            )
            if rep.passed:
                cur = extracted

    report = equivalence_check(
        model, cur, params, grid_n=cfg.grid_n, cert_tol=cfg.cert_tol
    )
    return SearchResult(
        design=cur,
        criterion=d_criterion(fisher_info(model, cur, params)),
        report=report,
        iterations=iterations,
        converged=converged and report.passed,
    )


def _extract_saturated_support(
    model: ModelSpec,
    params: Params,
    space: Interval,
    xi: DesignMeasure,
    cfg: SearchConfig,
) -> DesignMeasure | None:
    """Read the support off the converged variance function.

    At convergence the optimal support sits at the points where d(t)
    attains its level k: the refined interior maxima, plus a boundary
    when the measure actually carries mass there (the absorption model's
    d approaches k again as t grows, so a high boundary value alone is
    not evidence of support). When exactly k points emerge the design is
    saturated and its weights are the exact uniform measure; otherwise
    return None and leave the iterate untouched.
    """
    k = model.k
    d = variance_closure(model, xi, params)
    cutoff = k * (1.0 - 10.0 * cfg.cert_tol)
    points = [x for x, v in numerics.find_local_maxima(d, space, grid_n=cfg.grid_n) if v >= cutoff]
    for boundary in (space.lo, space.hi):
        mass_nearby = any(abs(t - boundary) <= cfg.merge_tol for t in xi.times)
        if mass_nearby and float(d(boundary)) >= cutoff:
            points.append(boundary)
    points.sort()
    deduped: list[float] = []
    for x in points:
        if not deduped or x - deduped[-1] > cfg.merge_tol:
            deduped.append(x)
    if len(deduped) != k:
        return None
    return DesignMeasure.uniform(deduped, space)


def _polish_saturated(
    model: ModelSpec,
    params: Params,
    space: Interval,
    xi: DesignMeasure,
    cfg: SearchConfig,
) -> DesignMeasure:
    """Re-optimize interior support positions of a saturated design.

    Weights stay at the exact uniform measure; points sitting on the
    space boundary stay put. Used as a final accuracy pass once the
    exchange algorithm has identified the support.
    """
    edge = cfg.tol_t
    free_idx = [
        i
        for i, t in enumerate(xi.times)
        if t - space.lo > edge and space.hi - t > edge
    ]
    if not free_idx:
        return xi
    fixed = [t for i, t in enumerate(xi.times) if i not in free_idx]

    def obj(x: np.ndarray) -> float:
        ts = np.sort(np.concatenate([fixed, np.clip(x, space.lo, space.hi)]))
        if np.any(np.diff(ts) < 1e-9):
            return -1e12
        g = model.grad(ts, params)
        sign, logdet = np.linalg.slogdet(g.T @ g / len(ts))
        return float(logdet) if sign > 0 else -1e12

    x0 = np.array([xi.times[i] for i in free_idx], dtype=float)
    res = numerics.maximize_multivariate(obj, x0, [space] * len(x0), tol=1e-7)
    if res.fval <= -1e11:
        return xi
    times = np.sort(np.concatenate([fixed, np.clip(res.x, space.lo, space.hi)]))
    return DesignMeasure.uniform(times, space)


def ld_design(
    model: ModelSpec,
    params: Params,
    space: Interval,
    cfg: SearchConfig | None = None,
) -> SearchResult:
    """Full pipeline: uniform search, exchange refinement, certification.

    Starts from a k-point uniform design and grows the requested support
    size if certification fails, up to the k(k+1)/2 support bound that any
    optimal information matrix admits.
    """
    cfg = cfg or SearchConfig()
    k = model.k
    n = cfg.n_points or k
    max_support = k * (k + 1) // 2
    total_iterations = 0
    last: SearchResult | None = None

    while n <= max_support:
        step_cfg = dataclasses.replace(cfg, n_points=n)
        step1 = uniform_ld_search(model, params, space, step_cfg)
        result = fedorov_v(model, params, space, step1.design, step_cfg)
        total_iterations += result.iterations
        if result.converged:
            return dataclasses.replace(result, iterations=total_iterations)
        last = result
        n += 1

    assert last is not None
    return dataclasses.replace(last, iterations=total_iterations)
