"""Branch-and-bound over the binary variables of a MILP encoding.

Each node solves the LP relaxation with a subset of binaries fixed. Nodes
prune on infeasibility; a relaxation with all binaries integral (within the
integrality tolerance) is a feasible solution. Branching picks the most
ambiguous unfixed ReLU binary, measured as min(|pre_lower|, pre_upper) of its
neuron, before falling back to fractional indicator binaries. The search is
depth-first with a periodic best-first restart so large trees still surface
good nodes early.

An optional incumbent hook lets callers turn fractional relaxation points
into exact feasible assignments (the complete verifier evaluates the real
network at the relaxation's input point); whatever the hook returns is
re-checked against the model before being accepted.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .encoding import MilpModel
from .simplex import LinearProgram, SolveKind, SolveStatus, simplex_solve

_BEST_FIRST_PERIOD = 256


@dataclass
class MilpStats:
    nodes: int = 0
    lp_solves: int = 0
    incumbent_from_hook: bool = False


@dataclass
class _Node:
    depth: int
    seq: int
    fixes: dict[int, float]
    parent_bound: float = np.inf


def _solve_with_fixes(
    lp: LinearProgram, fixes: dict[int, float], feasibility_tol: float
) -> SolveStatus:
    lower = lp.lower.copy()
    upper = lp.upper.copy()
    for var, val in fixes.items():
        lower[var] = val
        upper[var] = val
    node_lp = LinearProgram(
        lp.objective, lp.sense, lp.rows, lp.relations, lp.rhs, lower, upper, lp.names
    )
    return simplex_solve(node_lp, feasibility_tol=feasibility_tol)


def _assignment_satisfies(
    model: MilpModel, z: np.ndarray, fixes: dict[int, float], tol: float
) -> bool:
    lp = model.lp
    if z.shape != (lp.num_vars,):
        return False
    if np.any(z < lp.lower - tol) or np.any(z > lp.upper + tol):
        return False
    act = lp.rows @ z
    for i, rel in enumerate(lp.relations):
        slack = tol * max(1.0, abs(lp.rhs[i]))
        if rel == "<=" and act[i] > lp.rhs[i] + slack:
            return False
        if rel == ">=" and act[i] < lp.rhs[i] - slack:
            return False
        if rel == "=" and abs(act[i] - lp.rhs[i]) > slack:
            return False
    del fixes  # hook incumbents need not respect node fixes, only the model
    return True


def milp_solve(
    model: MilpModel,
    timeout_s: float | None = None,
    integrality_tol: float = 1e-6,
    feasibility_tol: float = 1e-7,
    incumbent_hook: Callable[[np.ndarray], np.ndarray | None] | None = None,
    stats: MilpStats | None = None,
) -> SolveStatus:
    """Feasible with a full assignment, Infeasible, or TimedOut.

    Deterministic for fixed inputs and no timeout.
    """
    if stats is None:
        stats = MilpStats()
    deadline = None if timeout_s is None else time.monotonic() + timeout_s

    # ambiguity score per phase binary: min(|pre_lower|, pre_upper) of its neuron
    name_pos = {name: i for i, name in enumerate(model.lp.names)}
    branch_score = {}
    for v, layer, neuron in model.relu_binaries:
        p = name_pos[f"pre[{layer}][{neuron}]"]
        branch_score[v] = min(abs(model.lp.lower[p]), model.lp.upper[p])

    relu_vars = [v for v, _, _ in model.relu_binaries]
    indicator_vars = [v for pair in model.indicator_binaries for v in pair]

    stack: list[_Node] = [_Node(0, 0, {}, np.inf)]
    seq = 1
    picked = 0
    while stack:
        if deadline is not None and time.monotonic() > deadline:
            return SolveStatus.timed_out()
        picked += 1
        if picked % _BEST_FIRST_PERIOD == 0:
            idx = max(range(len(stack)), key=lambda i: (stack[i].parent_bound, -stack[i].seq))
            node = stack.pop(idx)
        else:
            node = stack.pop()

        status = _solve_with_fixes(model.lp, node.fixes, feasibility_tol)
        stats.nodes += 1
        stats.lp_solves += 1
        if status.kind is SolveKind.INFEASIBLE:
            continue
        z = status.x
        assert z is not None

        fractional = [
            v for v in (*relu_vars, *indicator_vars)
            if v not in node.fixes and abs(z[v] - round(z[v])) > integrality_tol
        ]
        if not fractional:
            return SolveStatus.feasible(z, status.objective)

        if incumbent_hook is not None:
            candidate = incumbent_hook(z)
            if candidate is not None and _assignment_satisfies(
                model, candidate, node.fixes, max(integrality_tol, 1e-6)
            ):
                stats.incumbent_from_hook = True
                return SolveStatus.feasible(
                    candidate, float(model.lp.objective @ candidate)
                )

        relu_set = set(relu_vars)
        relu_frac = [v for v in fractional if v in relu_set]
        if relu_frac:
            var = max(relu_frac, key=lambda v: (branch_score[v], -v))
        else:
            var = min(fractional)

        # explore the rounded phase first
        first = float(round(z[var]))
        second = 1.0 - first
        for val in (second, first):  # pushed in reverse so `first` pops first
            child = dict(node.fixes)
            child[var] = val
            stack.append(_Node(node.depth + 1, seq, child, status.objective))
            seq += 1
    return SolveStatus.infeasible()
