"""The two-zone ("bow tie") local stability property.

An output deviation f_i(x') - f_i(x) is allowed a constant half-width c
while |f_i(x)| stays below a threshold (the knot) and a relative fraction of
|f_i(x)| beyond it (the wings). Perturbed inputs x' range over a per-dimension
relative box around x. All interval comparisons are closed: boundary-exact
deviations comply.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class Zone(enum.Enum):
    KNOT = "knot"
    WING = "wing"


class Status(enum.Enum):
    VERIFIED = "verified"
    FALSIFIED = "falsified"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class StabilityConfig:
    """Stability envelope parameters.

    knot_threshold: output magnitude below which the constant envelope applies.
    knot_halfwidth: allowed +/- deviation inside the knot.
    input_tolerance: relative per-dimension input perturbation fraction.
    output_tolerance: relative allowed output deviation fraction in the wings.
    abs_floor: optional absolute floor on box half-widths (0 keeps zero-width
        dimensions for zero-valued inputs).
    overrides: per-output-index overrides, e.g. {3: {"knot_halfwidth": 0.5}}.
    """

    knot_threshold: float = 10.0
    knot_halfwidth: float = 1.0
    input_tolerance: float = 0.05
    output_tolerance: float = 0.05
    abs_floor: float = 0.0
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.knot_threshold < 0:
            raise ValueError("knot_threshold must be >= 0")
        if self.knot_halfwidth <= 0:
            raise ValueError("knot_halfwidth must be > 0")
        if not 0 <= self.input_tolerance < 1:
            raise ValueError("input_tolerance must be in [0, 1)")
        if not 0 <= self.output_tolerance < 1:
            raise ValueError("output_tolerance must be in [0, 1)")
        if self.abs_floor < 0:
            raise ValueError("abs_floor must be >= 0")

    def params_for(self, index: int) -> tuple[float, float, float]:
        """(knot_threshold, knot_halfwidth, output_tolerance) for one output."""
        o = self.overrides.get(index, {})
        return (
            float(o.get("knot_threshold", self.knot_threshold)),
            float(o.get("knot_halfwidth", self.knot_halfwidth)),
            float(o.get("output_tolerance", self.output_tolerance)),
        )


@dataclass(frozen=True)
class PerturbationBox:
    """Closed per-dimension interval [lower_j, upper_j] of admissible x'."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box lower/upper must be 1-d arrays of equal length")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def halfwidth(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.upper + self.lower)

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=np.float64), self.lower, self.upper)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.lower.size))


@dataclass(frozen=True)
class DeltaBounds:
    """Per-output allowed deviation interval [lower_i, upper_i] and its zone."""

    lower: np.ndarray
    upper: np.ndarray
    zones: tuple[Zone, ...]

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1 or len(self.zones) != lo.size:
            raise ValueError("delta bounds and zones must have matching lengths")
        if np.any(lo > 0) or np.any(hi < 0):
            raise ValueError("delta intervals must contain 0")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "zones", tuple(self.zones))


@dataclass(frozen=True)
class Witness:
    """A concrete counterexample: perturbed input, violated output, deviation."""

    x_prime: np.ndarray
    index: int
    deviation: float


@dataclass(frozen=True)
class Verdict:
    status: Status
    witness: Witness | None = None
    decided_by: str = ""
    elapsed: float = 0.0
    reason: str | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.status is Status.FALSIFIED) != (self.witness is not None):
            raise ValueError("witness must be present exactly when status is falsified")


def build_box(
    x: np.ndarray, input_tolerance: float, abs_floor: float = 0.0
) -> PerturbationBox:
    """Relative box [x - p|x|, x + p|x|], optionally floored to abs_floor."""
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("input entries must be finite")
    hw = np.maximum(input_tolerance * np.abs(x), abs_floor)
    return PerturbationBox(x - hw, x + hw)


def compute_deltas(f_x: np.ndarray, cfg: StabilityConfig) -> DeltaBounds:
    """Allowed deviation intervals for the given reference outputs.

    Knot (|f_i(x)| <= threshold, boundary included): [-c, c] with constant c.
    Wings: [-p|f_i(x)|, p|f_i(x)|].
    """
    f_x = np.asarray(f_x, dtype=np.float64)
    if not np.isfinite(f_x).all():
        raise ValueError("reference outputs must be finite")
    lower = np.empty(f_x.size)
    upper = np.empty(f_x.size)
    zones = []
    for i, v in enumerate(f_x):
        threshold, halfwidth, out_tol = cfg.params_for(i)
        if abs(v) <= threshold:
            lower[i], upper[i] = -halfwidth, halfwidth
            zones.append(Zone.KNOT)
        else:
            r = out_tol * abs(v)
            lower[i], upper[i] = -r, r
            zones.append(Zone.WING)
    return DeltaBounds(lower, upper, tuple(zones))


def check_violation(
    f_x: np.ndarray, f_xp: np.ndarray, deltas: DeltaBounds
) -> tuple[int, float] | None:
    """First output whose deviation leaves its closed delta interval, if any."""
    f_x = np.asarray(f_x, dtype=np.float64)
    f_xp = np.asarray(f_xp, dtype=np.float64)
    if f_x.shape != f_xp.shape or f_x.shape != deltas.lower.shape:
        raise ValueError("output vectors and deltas must have equal lengths")
    dev = f_xp - f_x
    bad = (dev < deltas.lower) | (dev > deltas.upper)
    if not bad.any():
        return None
    i = int(np.argmax(bad))
    return i, float(dev[i])


_CONFIG_KEYS = {
    "T": "knot_threshold",
    "c_T": "knot_halfwidth",
    "p_inp": "input_tolerance",
    "p_out": "output_tolerance",
    "abs_floor": "abs_floor",
}


def config_from_dict(raw: dict) -> StabilityConfig:
    """Build a StabilityConfig from the property-config JSON keys."""
    kwargs = {}
    for key, attr in _CONFIG_KEYS.items():
        if key in raw:
            kwargs[attr] = float(raw[key])
    overrides = {}
    for idx, entry in raw.get("per_index_overrides", {}).items():
        overrides[int(idx)] = {
            _CONFIG_KEYS[k]: float(v) for k, v in entry.items() if k in _CONFIG_KEYS
        }
    unknown = set(raw) - set(_CONFIG_KEYS) - {"per_index_overrides"}
    if unknown:
        raise ValueError(f"unknown property config fields: {sorted(unknown)}")
    return StabilityConfig(overrides=overrides, **kwargs)


def config_to_dict(cfg: StabilityConfig) -> dict:
    raw = {
        "T": cfg.knot_threshold,
        "c_T": cfg.knot_halfwidth,
        "p_inp": cfg.input_tolerance,
        "p_out": cfg.output_tolerance,
        "abs_floor": cfg.abs_floor,
    }
    if cfg.overrides:
        back = {v: k for k, v in _CONFIG_KEYS.items()}
        raw["per_index_overrides"] = {
            str(i): {back[a]: v for a, v in entry.items()}
            for i, entry in cfg.overrides.items()
        }
    return raw


def load_property_config(path: str | Path) -> StabilityConfig:
    return config_from_dict(json.loads(Path(path).read_text()))
