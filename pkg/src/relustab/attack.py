"""Gradient attacks against the stability envelope (the falsifying brick).

Each output index is attacked twice per point, once toward each violation
direction. Iterates take signed-gradient steps scaled per dimension by the
box half-width and are clamped back onto the box, so every candidate is a
valid perturbed input by construction. A returned witness is always
re-checked with an exact forward pass. Attacks can falsify but never verify.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .network import DenseNetwork, forward, gradient
from .stability import (
    DeltaBounds,
    PerturbationBox,
    StabilityConfig,
    Status,
    Verdict,
    Witness,
    build_box,
    check_violation,
    compute_deltas,
)

_METHODS = ("pgd", "fgsm")


@dataclass(frozen=True)
class AttackConfig:
    """Attack knobs. step_size is relative to the box half-width per dimension."""

    method: str = "pgd"
    steps: int = 20
    step_size: float = 0.01
    restarts: int = 0
    index_order: str = "natural"  # or "by_success" (pipeline-managed ordering)
    early_stop: bool = True

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be > 0")
        if self.restarts < 0:
            raise ValueError("restarts must be >= 0")
        if self.index_order not in ("natural", "by_success"):
            raise ValueError("index_order must be 'natural' or 'by_success'")


class _Budget:
    """Forward/gradient evaluation counters for the budget contract."""

    __slots__ = ("forwards", "gradients")

    def __init__(self):
        self.forwards = 0
        self.gradients = 0


def ascent_iterates(
    net: DenseNetwork,
    start: np.ndarray,
    box: PerturbationBox,
    index: int,
    direction: float,
    steps: int,
    step_size: float,
    budget: _Budget | None = None,
):
    """Yield (iterate, f(iterate)) along the projected signed-gradient ascent."""
    halfwidth = box.halfwidth
    x_adv = np.array(start, dtype=np.float64)
    for _ in range(steps):
        g = gradient(net, x_adv, index, direction)
        if budget is not None:
            budget.gradients += 1
        x_adv = box.clip(x_adv + step_size * halfwidth * np.sign(g))
        f_adv = forward(net, x_adv)
        if budget is not None:
            budget.forwards += 1
        yield x_adv, f_adv


def attack_index(
    net: DenseNetwork,
    x: np.ndarray,
    box: PerturbationBox,
    deltas: DeltaBounds,
    index: int,
    direction: float,
    cfg: AttackConfig,
    rng: np.random.Generator | None = None,
    _budget: _Budget | None = None,
    _f_x: np.ndarray | None = None,
) -> np.ndarray | None:
    """First iterate violating output `index`, or None if the attack fails."""
    f_x = forward(net, x) if _f_x is None else _f_x
    if cfg.method == "fgsm":
        steps, step_size = 1, 1.0
    else:
        steps, step_size = cfg.steps, cfg.step_size

    starts = [x]
    if cfg.restarts and rng is not None:
        starts += [box.sample(rng, 1)[0] for _ in range(cfg.restarts)]

    for start in starts:
        for x_adv, f_adv in ascent_iterates(
            net, start, box, index, direction, steps, step_size, _budget
        ):
            dev = f_adv[index] - f_x[index]
            if dev < deltas.lower[index] or dev > deltas.upper[index]:
                return x_adv
    return None


def attack_point(
    net: DenseNetwork,
    x: np.ndarray,
    cfg: AttackConfig,
    property_cfg: StabilityConfig,
    index_order: list[int] | None = None,
    rng: np.random.Generator | None = None,
) -> Verdict:
    """Attack every (output, direction) pair until a witness appears.

    Falsified with the first validated witness, Unknown otherwise; an attack
    can never prove stability. Verdict info carries per-attempt results (for
    success histograms) and evaluation counters (for the budget contract).
    """
    start_time = time.perf_counter()
    f_x = forward(net, x)
    box = build_box(x, property_cfg.input_tolerance, property_cfg.abs_floor)
    deltas = compute_deltas(f_x, property_cfg)
    order = list(index_order) if index_order is not None else list(range(net.output_dim))

    budget = _Budget()
    attempts: list[tuple[int, int, bool]] = []  # (index, direction slot, success)
    witness = None
    for index in order:
        for direction in (1.0, -1.0):
            x_adv = attack_index(
                net, x, box, deltas, index, direction, cfg,
                rng=rng, _budget=budget, _f_x=f_x,
            )
            success = x_adv is not None
            attempts.append((index, 0 if direction > 0 else 1, success))
            if success:
                violation = check_violation(f_x, forward(net, x_adv), deltas)
                budget.forwards += 1
                if violation is None:  # cannot happen for an exact evaluator
                    continue
                witness = Witness(x_adv, violation[0], violation[1])
                break
        if witness is not None and cfg.early_stop:
            break
    info = {
        "attempts": attempts,
        "forward_evals": budget.forwards,
        "gradient_evals": budget.gradients,
    }
    if witness is not None:
        return Verdict(
            Status.FALSIFIED,
            witness=witness,
            decided_by="attack",
            elapsed=time.perf_counter() - start_time,
            info=info,
        )
    return Verdict(
        Status.UNKNOWN,
        decided_by="attack",
        elapsed=time.perf_counter() - start_time,
        reason="no successful attack",
        info=info,
    )
