"""Plain key = value scenario files.

A scenario names the model, its postulated parameter values, the dose,
and the design space, plus optional search overrides. The format is one
assignment per line with # comments, e.g.

    model = pk1
    beta = 0.5, 10, 1, 0.1
    dose = 5
    space_hi = 160
    seed = 0

Unknown keys are rejected so typos cannot silently change a run.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .models import MODELS, ModelSpec, Params, make_params
from .numerics import Interval
from .search import SearchConfig


class ScenarioError(ValueError):
    """Scenario file is malformed or violates a validity requirement."""


DEFAULT_SPACE_HI = {"pk1": 160.0, "pk2": 200.0}

_CONFIG_KEYS = {
    "n_points": int,
    "multistarts": int,
    "max_iter": int,
    "grid_n": int,
    "tol_t": float,
    "cert_tol": float,
    "merge_tol": float,
    "drop_weight": float,
}


@dataclass(frozen=True)
class Scenario:
    model: ModelSpec
    params: Params
    space: Interval
    seed: int
    cfg: SearchConfig
    raw: tuple[tuple[str, str], ...]

    def provenance(self) -> list[str]:
        """Normalized key = value lines for echoing into outputs."""
        return [f"{k} = {v}" for k, v in self.raw]


def _parse_lines(text: str, source: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ScenarioError(f"{source}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip().lower(), value.strip()
        if not value:
            raise ScenarioError(f"{source}:{lineno}: empty value for {key!r}")
        if key in entries:
            raise ScenarioError(f"{source}:{lineno}: duplicate key {key!r}")
        entries[key] = value
    return entries


def parse_scenario(path, seed_override: int | None = None) -> Scenario:
    """Read and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    entries = _parse_lines(text, str(path))

    known = {"model", "beta", "dose", "sigma", "space_hi", "seed"} | set(_CONFIG_KEYS)
    unknown = set(entries) - known
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {', '.join(sorted(unknown))}")

    model_id = entries.get("model")
    if model_id is None:
        raise ScenarioError("scenario must set 'model' (pk1 or pk2)")
    if model_id not in MODELS:
        raise ScenarioError(f"unknown model {model_id!r}; expected pk1 or pk2")
    model = MODELS[model_id]

    if "beta" not in entries:
        raise ScenarioError("scenario must set 'beta' (comma-separated values)")
    try:
        beta = [float(v) for v in entries["beta"].replace(",", " ").split()]
    except ValueError as exc:
        raise ScenarioError(f"beta is not numeric: {entries['beta']!r}") from exc

    if "dose" not in entries:
        raise ScenarioError("scenario must set 'dose'")

    def _float(key: str, default: float | None = None) -> float:
        raw = entries.get(key)
        if raw is None:
            assert default is not None
            return default
        try:
            return float(raw)
        except ValueError as exc:
            raise ScenarioError(f"{key} is not numeric: {raw!r}") from exc

    dose = _float("dose")
    sigma = _float("sigma", 1.0)
    space_hi = _float("space_hi", DEFAULT_SPACE_HI[model_id])
    if space_hi <= 0:
        raise ScenarioError(f"space_hi must be positive, got {space_hi}")

    try:
        seed = int(entries.get("seed", "0"))
    except ValueError as exc:
        raise ScenarioError(f"seed is not an integer: {entries['seed']!r}") from exc
    if seed_override is not None:
        seed = seed_override

    overrides: dict[str, object] = {}
    for key, cast in _CONFIG_KEYS.items():
        if key in entries:
            try:
                overrides[key] = cast(entries[key])
            except ValueError as exc:
                raise ScenarioError(f"{key} is not a valid {cast.__name__}") from exc
    cfg = dataclasses.replace(SearchConfig(), seed=seed, **overrides)

    params = make_params(model_id, beta, dose=dose, sigma=sigma)

    raw = [
        ("model", model_id),
        ("beta", ", ".join(format(b, ".9g") for b in beta)),
        ("dose", format(dose, ".9g")),
        ("sigma", format(sigma, ".9g")),
        ("space_hi", format(space_hi, ".9g")),
        ("seed", str(seed)),
    ]
    raw.extend((k, str(overrides[k])) for k in _CONFIG_KEYS if k in overrides)

    return Scenario(
        model=model,
        params=params,
        space=Interval(0.0, space_hi),
        seed=seed,
        cfg=cfg,
        raw=tuple(raw),
    )
