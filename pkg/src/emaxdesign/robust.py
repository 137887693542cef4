"""Robust alternatives to a locally optimal design, and their diagnostics.

Two families are covered. Equal-spacing designs put uniform weight on an
arithmetic time grid {0, h, ..., (s-1)h} and optimize the spacing h for
the determinant criterion. Expanded designs start from an optimal support
and add shifted copies t* + r or t* - r of selected support points, again
with uniform weights; the expansion orders used for the two models are
hard-coded to the published layouts because they differ between models.

The local robustness index of a design for parameter i is

    LRI_i = | 1 / (d det M / d beta_i) |,

the reciprocal sensitivity of the criterion to that parameter near the
nominal point. The determinant does not involve the additive baseline at
all, so its index is infinite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import numerics
from .design import DesignMeasure, d_criterion, efficiency, fisher_info
from .models import ModelSpec, Params
from .numerics import Interval

COLLISION_TOL = 1e-9
LRI_ZERO_FLOOR = 1e-300


class CollidingPoints(ValueError):
    """Expansion step length creates duplicate support times."""


class OutOfRange(ValueError):
    """Expansion pushes a support time outside the design space."""


class UnsupportedSize(ValueError):
    """No published expansion layout for the requested sizes."""


@dataclass(frozen=True)
class EsuldSpec:
    """Equal-spacing design: support {0, h, ..., (s-1)h}, weights 1/s."""

    s: int
    h: float
    design: DesignMeasure


@dataclass(frozen=True)
class ExpansionSchedule:
    """Ordered (base_index, sign) expansion steps; indices are 0-based."""

    steps: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        for idx, sign in self.steps:
            if sign not in (-1, 1):
                raise ValueError(f"expansion sign must be +1 or -1, got {sign}")
            if idx < 0:
                raise ValueError(f"expansion index must be nonnegative, got {idx}")

    def __len__(self) -> int:
        return len(self.steps)


# Expansion orders exactly as published for the two models: the bolus
# layout starts at the first base point (which sits at t=0), the
# absorption layout skips it.
_PK1_ORDER = ((0, +1), (1, +1), (2, +1), (3, -1), (1, -1), (2, -1))
_PK2_ORDER = ((1, +1), (2, +1), (3, +1), (4, -1), (2, -1))
_BASE_SIZES = {"pk1": 4, "pk2": 5}


def default_schedule(model_id: str, base_size: int, target_size: int) -> ExpansionSchedule:
    """Published expansion order for growing a base design to target_size."""
    orders = {"pk1": _PK1_ORDER, "pk2": _PK2_ORDER}
    if model_id not in orders:
        raise UnsupportedSize(f"no expansion layout for model {model_id!r}")
    if base_size != _BASE_SIZES[model_id]:
        raise UnsupportedSize(
            f"{model_id} expansions are defined for a {_BASE_SIZES[model_id]}-point base, "
            f"got {base_size}"
        )
    extra = target_size - base_size
    order = orders[model_id]
    if extra < 0 or extra > len(order):
        raise UnsupportedSize(
            f"target size {target_size} not reachable from base {base_size} "
            f"(supported up to {base_size + len(order)})"
        )
    return ExpansionSchedule(steps=order[:extra])


def eseuld(base: DesignMeasure, r: float, sched: ExpansionSchedule) -> DesignMeasure:
    """Expand a base design by +-r shifts, uniform weights over the result."""
    if r < COLLISION_TOL:
        raise CollidingPoints(f"step length r={r} duplicates the base support")
    times = list(base.times)
    for idx, sign in sched.steps:
        if idx >= base.n:
            raise UnsupportedSize(f"schedule index {idx} invalid for a {base.n}-point base")
        t_new = base.times[idx] + sign * r
        if not base.space.contains(t_new):
            raise OutOfRange(
                f"expanded time {t_new} outside [{base.space.lo}, {base.space.hi}]"
            )
        times.append(t_new)
    times.sort()
    for a, b in zip(times, times[1:]):
        if b - a < COLLISION_TOL:
            raise CollidingPoints(f"expanded support collides at t={a}")
    return DesignMeasure.uniform(times, base.space)


def esuld(
    model: ModelSpec,
    params: Params,
    space: Interval,
    s: int,
    reference: DesignMeasure,
) -> tuple[EsuldSpec, float]:
    """Best equal-spacing design of size s and its efficiency vs reference.

    The spacing maximizes det M over (0, u/(s-1)] by grid-seeded scalar
    maximization; the reference is normally the certified optimal design.
    """
    if s < model.k:
        raise ValueError(f"support size {s} below parameter count {model.k}")
    h_max = space.hi / (s - 1)
    grid = np.arange(s, dtype=float)

    def crit(h):
        hs = np.atleast_1d(np.asarray(h, dtype=float))
        out = np.empty(hs.shape)
        for i, hv in enumerate(hs):
            xi = DesignMeasure.uniform(grid * hv, space)
            out[i] = d_criterion(fisher_info(model, xi, params))
        return out if np.ndim(h) else float(out[0])

    h_star, _ = numerics.maximize_scalar(crit, Interval(h_max * 1e-6, h_max))
    design = DesignMeasure.uniform(grid * h_star, space)
    return (
        EsuldSpec(s=s, h=h_star, design=design),
        efficiency(model, design, reference, params),
    )


def lri(
    model: ModelSpec,
    xi: DesignMeasure,
    params: Params,
    i: int,
    fd_step: float | None = None,
) -> float:
    """Robustness index for parameter i; math.inf for the baseline.

    Central difference with one Richardson refinement; the determinant is
    smooth in beta, so the default relative step 1e-5 resolves the
    published 8-figure values.
    """
    if not 0 <= i < model.k:
        raise ValueError(f"parameter index {i} out of range for k={model.k}")
    beta_i = params.beta[i]
    h = fd_step if fd_step is not None else 1e-5 * max(abs(beta_i), 1.0)

    def f(x: float) -> float:
        return d_criterion(fisher_info(model, xi, params.with_beta(i, x)))

    coarse = numerics.central_diff(f, beta_i, h)
    fine = numerics.central_diff(f, beta_i, h / 2.0)
    deriv = (4.0 * fine - coarse) / 3.0
    if abs(deriv) < LRI_ZERO_FLOOR:
        return math.inf
    return abs(1.0 / deriv)


def lri_all(model: ModelSpec, xi: DesignMeasure, params: Params) -> dict[str, float]:
    """LRI per parameter name, baseline included (always infinite)."""
    return {name: lri(model, xi, params, i) for i, name in enumerate(model.param_names)}


class RPoint(NamedTuple):
    r: float
    efficiency: float | None
    feasible: bool


def efficiency_vs_r(
    model: ModelSpec,
    params: Params,
    base: DesignMeasure,
    sched: ExpansionSchedule,
    r_grid: Sequence[float],
    reference: DesignMeasure | None = None,
) -> list[RPoint]:
    """Efficiency of the expanded design at each step length.

    Infeasible step lengths (collisions, out-of-range shifts, or a
    singular information matrix) are recorded as gaps rather than raised,
    so the curve renders with breaks.
    """
    ref = reference if reference is not None else base
    curve: list[RPoint] = []
    for r in r_grid:
        try:
            xi = eseuld(base, float(r), sched)
            eff = efficiency(model, xi, ref, params)
        except (CollidingPoints, OutOfRange, numerics.SingularMatrix):
            curve.append(RPoint(float(r), None, False))
            continue
        if eff <= 0.0:
            curve.append(RPoint(float(r), None, False))
        else:
            curve.append(RPoint(float(r), float(eff), True))
    return curve
