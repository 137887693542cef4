"""Emax response composed with one-compartment drug kinetics.

Two variants are provided. The bolus variant (``pk1``) feeds an
exponentially decaying concentration into the Emax curve:

    eta(t) = beta0 + beta1 * D / (beta2 * exp(beta3 * t) + D)

The absorption variant (``pk2``) uses first-order input and first-order
elimination, giving a rise-then-fall concentration profile:

    eta(t) = beta0 + beta1 * A(t) / (B + A(t))
    A(t)   = D * (exp(-beta3 * t) - exp(-beta2 * t))
    B      = beta4 * (1 - beta3 / beta2)

with absorption rate beta2 strictly faster than elimination rate beta3,
so that A(t) >= 0 and B > 0 and the response is smooth everywhere.

Evaluation is vectorized over time and written in terms of decaying
exponentials only, so very large t underflows cleanly to the baseline
instead of overflowing. Parameter containers validate their domain on
construction; the search code relies on hard rejection rather than
clamping to avoid wandering into singular regimes undetected.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Union

import numpy as np


class InvalidParams(ValueError):
    """Parameter vector violates the model's validity domain."""


def _check_positive(obj, names) -> None:
    for name in names:
        v = getattr(obj, name)
        if not np.isfinite(v) or not v > 0:
            raise InvalidParams(f"{name} must be finite and > 0, got {v}")


@dataclass(frozen=True)
class ParamsPK1:
    """Bolus-model parameters.

    beta0: minimum residual effect (unrestricted sign)
    beta1: maximum drug effect, > 0
    beta2: dose giving half the maximal effect, mg/kg, > 0
    beta3: total elimination rate, 1/hour, > 0
    dose:  administered dose, mg/kg, > 0
    sigma: error standard deviation, > 0
    """

    beta0: float
    beta1: float
    beta2: float
    beta3: float
    dose: float
    sigma: float = 1.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.beta0):
            raise InvalidParams(f"beta0 must be finite, got {self.beta0}")
        _check_positive(self, ("beta1", "beta2", "beta3", "dose", "sigma"))

    @property
    def beta(self) -> tuple[float, ...]:
        return (self.beta0, self.beta1, self.beta2, self.beta3)

    def with_beta(self, i: int, value: float) -> "ParamsPK1":
        return replace(self, **{f"beta{i}": value})


@dataclass(frozen=True)
class ParamsPK2:
    """Absorption-model parameters.

    beta0: baseline effect
    beta1: maximum drug effect, > 0
    beta2: absorption rate, 1/hour
    beta3: total elimination rate, 1/hour, with beta2 > beta3 > 0
    beta4: dose giving half the maximal effect, mg/kg, > 0
    dose:  administered dose, mg/kg, > 0
    sigma: error standard deviation, > 0
    """

    beta0: float
    beta1: float
    beta2: float
    beta3: float
    beta4: float
    dose: float
    sigma: float = 1.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.beta0):
            raise InvalidParams(f"beta0 must be finite, got {self.beta0}")
        _check_positive(self, ("beta1", "beta2", "beta3", "beta4", "dose", "sigma"))
        if not self.beta2 > self.beta3:
            raise InvalidParams(
                f"beta2 (absorption rate, {self.beta2}) must exceed "
                f"beta3 (elimination rate, {self.beta3})"
            )
        if self.beta2 - self.beta3 <= 1e-9 * self.beta2:
            raise InvalidParams(
                "beta2 and beta3 are too close; the response degenerates "
                f"(beta2={self.beta2}, beta3={self.beta3})"
            )

    @property
    def beta(self) -> tuple[float, ...]:
        return (self.beta0, self.beta1, self.beta2, self.beta3, self.beta4)

    def with_beta(self, i: int, value: float) -> "ParamsPK2":
        return replace(self, **{f"beta{i}": value})


Params = Union[ParamsPK1, ParamsPK2]


def _times(t) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise ValueError("sampling times must be nonnegative")
    return arr


def eta_pk1(t, p: ParamsPK1):
    """Mean effect of the bolus model at time(s) t."""
    arr = _times(t)
    w = np.exp(-p.beta3 * arr)
    out = p.beta0 + p.beta1 * p.dose * w / (p.beta2 + p.dose * w)
    return out if out.ndim else float(out)


def grad_pk1(t, p: ParamsPK1) -> np.ndarray:
    """Gradient of eta_pk1 wrt (beta0, beta1, beta2, beta3); shape t.shape + (4,)."""
    arr = _times(t)
    w = np.exp(-p.beta3 * arr)
    den = p.beta2 + p.dose * w
    g0 = np.ones_like(arr)
    g1 = p.dose * w / den
    g2 = -p.beta1 * p.dose * w / den**2
    g3 = g2 * p.beta2 * arr
    return np.stack([g0, g1, g2, g3], axis=-1)


def _pk2_terms(arr: np.ndarray, p: ParamsPK2):
    e2 = np.exp(-p.beta2 * arr)
    e3 = np.exp(-p.beta3 * arr)
    a = p.dose * (e3 - e2)
    b = p.beta4 * (1.0 - p.beta3 / p.beta2)
    return e2, e3, a, b


def eta_pk2(t, p: ParamsPK2):
    """Mean effect of the absorption model at time(s) t."""
    arr = _times(t)
    _, _, a, b = _pk2_terms(arr, p)
    out = p.beta0 + p.beta1 * a / (b + a)
    return out if out.ndim else float(out)


def grad_pk2(t, p: ParamsPK2) -> np.ndarray:
    """Gradient of eta_pk2 wrt (beta0, ..., beta4); shape t.shape + (5,)."""
    arr = _times(t)
    e2, e3, a, b = _pk2_terms(arr, p)
    den = (b + a) ** 2
    da_db2 = p.dose * arr * e2
    da_db3 = -p.dose * arr * e3
    db_db2 = p.beta4 * p.beta3 / p.beta2**2
    db_db3 = -p.beta4 / p.beta2
    g0 = np.ones_like(arr)
    g1 = a / (b + a)
    g2 = p.beta1 * (b * da_db2 - a * db_db2) / den
    g3 = p.beta1 * (b * da_db3 - a * db_db3) / den
    g4 = -p.beta1 * a * (1.0 - p.beta3 / p.beta2) / den
    return np.stack([g0, g1, g2, g3, g4], axis=-1)


def peak_time_pk2(p: ParamsPK2) -> float:
    """Time of maximal response: log(beta2/beta3) / (beta2 - beta3)."""
    return float(np.log(p.beta2 / p.beta3) / (p.beta2 - p.beta3))


@dataclass(frozen=True)
class ModelSpec:
    """A mean function bundled with its analytic parameter gradient.

    ``eta(t, params)`` and ``grad(t, params)`` accept scalar or array t;
    the gradient's trailing axis indexes the k parameters, ordered with
    the additive baseline beta0 first.
    """

    model_id: str
    k: int
    param_names: tuple[str, ...]
    eta: Callable
    grad: Callable
    params_type: type


PK1 = ModelSpec(
    model_id="pk1",
    k=4,
    param_names=("beta0", "beta1", "beta2", "beta3"),
    eta=eta_pk1,
    grad=grad_pk1,
    params_type=ParamsPK1,
)

PK2 = ModelSpec(
    model_id="pk2",
    k=5,
    param_names=("beta0", "beta1", "beta2", "beta3", "beta4"),
    eta=eta_pk2,
    grad=grad_pk2,
    params_type=ParamsPK2,
)

MODELS = {"pk1": PK1, "pk2": PK2}


def make_params(model_id: str, beta, dose: float, sigma: float = 1.0) -> Params:
    """Build a validated parameter set for the named model."""
    try:
        model = MODELS[model_id]
    except KeyError:
        raise InvalidParams(f"unknown model {model_id!r}; expected 'pk1' or 'pk2'") from None
    beta = tuple(float(b) for b in beta)
    if len(beta) != model.k:
        raise InvalidParams(f"{model_id} needs {model.k} beta values, got {len(beta)}")
    return model.params_type(*beta, dose=float(dose), sigma=float(sigma))
