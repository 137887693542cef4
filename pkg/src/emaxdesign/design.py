"""Design measures, information matrices and D-optimality machinery.

A design measure places probability weights on sampling times inside a
fixed interval. Its normalized information matrix is

    M(xi) = sigma**-2 * sum_i p_i * g(t_i) g(t_i)^T,      g = d eta / d beta,

and a candidate design is certified through the standardized variance

    d(t) = tr(I(t) M^-1)                                   (all k parameters)
    d(t) = tr(I(t) M^-1) - tr(I22(t) M22^-1)               (s of k parameters)

where I(t) is the single-point information matrix and the 22-block refers
to the nuisance parameters. A design is optimal for the s parameters of
interest exactly when sup_t d(t) equals s, attained at the support.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import numerics
from .models import ModelSpec, Params
from .numerics import Interval

MIN_TIME_GAP = 1e-9
WEIGHT_SUM_TOL = 1e-12
DEFAULT_GRID_N = 4000
DEFAULT_CERT_TOL = 1e-3

CSV_HEADER = ("t_hours", "weight")


class InvalidDesign(ValueError):
    """Design measure violates its invariants."""


class SingularNuisanceBlock(numerics.SingularMatrix):
    """The nuisance block of the information matrix is not invertible."""


class DegenerateReference(ValueError):
    """Reference design has zero determinant, efficiency is undefined."""


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


@dataclass(frozen=True)
class DesignMeasure:
    """Sampling times with probability weights on a design space [lo, hi]."""

    times: tuple[float, ...]
    weights: tuple[float, ...]
    space: Interval

    def __post_init__(self) -> None:
        ts, ws = self.times, self.weights
        if len(ts) == 0:
            raise InvalidDesign("design needs at least one support point")
        if len(ts) != len(ws):
            raise InvalidDesign(f"{len(ts)} times but {len(ws)} weights")
        for t in ts:
            if not self.space.contains(t):
                raise InvalidDesign(
                    f"time {t} outside design space [{self.space.lo}, {self.space.hi}]"
                )
        for a, b in zip(ts, ts[1:]):
            if b - a < MIN_TIME_GAP:
                raise InvalidDesign(f"support times {a} and {b} are not separated")
        for w in ws:
            if not w > 0:
                raise InvalidDesign(f"weights must be positive, got {w}")
        total = float(sum(ws))
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidDesign(f"weights sum to {total!r}, expected 1")

    @property
    def n(self) -> int:
        return len(self.times)

    @classmethod
    def from_points(
        cls, points: Iterable[tuple[float, float]], space: Interval
    ) -> "DesignMeasure":
        pts = sorted((float(t), float(w)) for t, w in points)
        return cls(
            times=tuple(t for t, _ in pts),
            weights=tuple(w for _, w in pts),
            space=space,
        )

    @classmethod
    def uniform(cls, times: Iterable[float], space: Interval) -> "DesignMeasure":
        ts = tuple(sorted(float(t) for t in times))
        n = len(ts)
        if n == 0:
            raise InvalidDesign("design needs at least one support point")
        w = np.full(n, 1.0 / n)
        w /= w.sum()
        return cls(times=ts, weights=tuple(w), space=space)

    def renormalized(self) -> "DesignMeasure":
        w = np.asarray(self.weights, dtype=float)
        w = w / w.sum()
        return DesignMeasure(self.times, tuple(w), self.space)

    def to_csv(self, path, comments: Sequence[str] = ()) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            for line in comments:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for t, w in zip(self.times, self.weights):
                writer.writerow([_fmt(t), _fmt(w)])

    @classmethod
    def from_csv(cls, path, space: Interval) -> "DesignMeasure":
        """Load the two-column interchange format, skipping # comments.

        Weights are renormalized exactly after parsing; the 9-significant-
        digit file format cannot carry machine-precision weight sums.
        """
        path = Path(path)
        rows: list[tuple[float, float]] = []
        with path.open(newline="") as fh:
            filtered = (line for line in fh if not line.lstrip().startswith("#"))
            reader = csv.reader(filtered)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
                raise InvalidDesign(f"{path}: expected header {','.join(CSV_HEADER)}")
            for row in reader:
                if not row:
                    continue
                if len(row) != 2:
                    raise InvalidDesign(f"{path}: malformed row {row!r}")
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError as exc:
                    raise InvalidDesign(f"{path}: non-numeric row {row!r}") from exc
        if not rows:
            raise InvalidDesign(f"{path}: no design rows")
        total = sum(w for _, w in rows)
        if abs(total - 1.0) > 1e-6:
            raise InvalidDesign(f"{path}: weights sum to {total!r}")
        return cls.from_points(((t, w / total) for t, w in rows), space)


@dataclass(frozen=True)
class FisherInfo:
    """Normalized information matrix with its parameter count and sigma."""

    m: np.ndarray
    k: int
    sigma_used: float


@dataclass(frozen=True)
class EquivalenceReport:
    """Outcome of an equivalence-theorem certification sweep."""

    sup_d: float
    argmax_t: float
    local_maxima: tuple[tuple[float, float], ...]
    threshold: float
    passed: bool
    grid_n: int


def _normalize_interest(k: int, interest: Sequence[int] | None) -> tuple[int, ...]:
    if interest is None:
        return tuple(range(k))
    idx = tuple(sorted(set(int(i) for i in interest)))
    if not idx:
        raise ValueError("interest set must be non-empty")
    if idx[0] < 0 or idx[-1] >= k:
        raise ValueError(f"interest indices {idx} out of range for k={k}")
    return idx


def fisher_info(model: ModelSpec, xi: DesignMeasure, params: Params) -> FisherInfo:
    """Weighted sum of gradient outer products, scaled by sigma**-2."""
    g = model.grad(np.asarray(xi.times, dtype=float), params)
    w = np.asarray(xi.weights, dtype=float)
    m = (g.T * w) @ g / params.sigma**2
    m = 0.5 * (m + m.T)
    return FisherInfo(m=m, k=model.k, sigma_used=params.sigma)


def point_info(model: ModelSpec, t: float, params: Params) -> FisherInfo:
    """Information matrix of the one-point design at t."""
    g = model.grad(float(t), params)
    m = np.outer(g, g) / params.sigma**2
    return FisherInfo(m=m, k=model.k, sigma_used=params.sigma)


def d_criterion(mi: FisherInfo) -> float:
    """det M, computed through a Cholesky factor when M is positive definite.

    Rank-deficient designs come back as exactly the clamped elimination
    value, never a spurious negative.
    """
    try:
        c = np.linalg.cholesky(mi.m)
    except np.linalg.LinAlgError:
        return max(float(np.linalg.det(mi.m)), 0.0)
    return float(np.prod(np.diagonal(c)) ** 2)


def ds_criterion(mi: FisherInfo, interest: Sequence[int]) -> float:
    """det M / det M22 with M22 the block of the parameters not in interest."""
    idx = _normalize_interest(mi.k, interest)
    if len(idx) == mi.k:
        return d_criterion(mi)
    nuis = [i for i in range(mi.k) if i not in set(idx)]
    m22 = mi.m[np.ix_(nuis, nuis)]
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(m22)
    if not np.isfinite(cond) or cond > numerics.COND_LIMIT:
        raise SingularNuisanceBlock(f"nuisance block condition estimate {cond:.3g}")
    det22 = float(np.linalg.det(m22))
    return d_criterion(mi) / det22


def variance_closure(
    model: ModelSpec,
    xi: DesignMeasure,
    params: Params,
    interest: Sequence[int] | None = None,
):
    """Return d(t) as a vectorized callable with M factored once."""
    idx = _normalize_interest(model.k, interest)
    fi = fisher_info(model, xi, params)
    minv = numerics.inverse(fi.m)
    sig2 = params.sigma**2
    if len(idx) == model.k:
        nuis: tuple[int, ...] = ()
        m22_inv = None
    else:
        nuis = tuple(i for i in range(model.k) if i not in set(idx))
        try:
            m22_inv = numerics.inverse(fi.m[np.ix_(nuis, nuis)])
        except numerics.SingularMatrix as exc:
            raise SingularNuisanceBlock(str(exc)) from exc

    def d(t):
        g = model.grad(t, params)
        full = np.einsum("...i,ij,...j->...", g, minv, g) / sig2
        if m22_inv is not None:
            gn = g[..., nuis]
            full = full - np.einsum("...i,ij,...j->...", gn, m22_inv, gn) / sig2
        out = np.maximum(full, 0.0)
        return out if np.ndim(out) else float(out)

    return d


def variance_fn(
    model: ModelSpec,
    t,
    xi: DesignMeasure,
    params: Params,
    interest: Sequence[int] | None = None,
):
    """Standardized (partial) variance d(t, xi); vectorized over t."""
    return variance_closure(model, xi, params, interest)(t)


def equivalence_check(
    model: ModelSpec,
    xi: DesignMeasure,
    params: Params,
    interest: Sequence[int] | None = None,
    grid_n: int = DEFAULT_GRID_N,
    cert_tol: float = DEFAULT_CERT_TOL,
    refine_tol: float = numerics.GOLDEN_TOL,
) -> EquivalenceReport:
    """Certify xi by sweeping d(t) over the design space.

    The sup is taken over a linear grid (endpoints included) together with
    golden-refined interior local maxima. Certification passes when the
    sup does not exceed s * (1 + cert_tol), s being the number of
    parameters of interest.
    """
    idx = _normalize_interest(model.k, interest)
    s = float(len(idx))
    d = variance_closure(model, xi, params, interest)
    xs = np.linspace(xi.space.lo, xi.space.hi, int(grid_n))
    vals = np.asarray(d(xs), dtype=float)
    maxima = numerics.find_local_maxima(d, xi.space, grid_n=grid_n, tol=refine_tol)

    candidates = [(float(v), float(x)) for x, v in zip(xs, vals)]
    candidates.extend((float(v), float(x)) for x, v in maxima)
    sup_d, argmax_t = max(candidates, key=lambda c: (c[0], -c[1]))
    return EquivalenceReport(
        sup_d=sup_d,
        argmax_t=argmax_t,
        local_maxima=tuple((float(x), float(v)) for x, v in maxima),
        threshold=s,
        passed=bool(sup_d <= s * (1.0 + cert_tol)),
        grid_n=int(grid_n),
    )


def efficiency(
    model: ModelSpec, xi: DesignMeasure, xi_ref: DesignMeasure, params: Params
) -> float:
    """Determinant ratio det M(xi) / det M(xi_ref); the raw ratio, no root."""
    ref = d_criterion(fisher_info(model, xi_ref, params))
    if ref <= 0.0:
        raise DegenerateReference("reference design has det M = 0")
    return d_criterion(fisher_info(model, xi, params)) / ref
