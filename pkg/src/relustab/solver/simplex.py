"""Bounded-variable primal simplex on a dense tableau.

Two phases: phase 1 drives row artificials to zero from an all-bounds start,
phase 2 optimizes the user objective. Nonbasic variables rest at a finite
bound (every structural variable must have finite bounds; slacks added for
inequality rows may be one-sided). Pricing is Dantzig with a permanent switch
to Bland's rule after a run of degenerate pivots. The final vertex is
re-verified against the original data; numerical breakdown raises instead of
returning a wrong status.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

REL_LE = "<="
REL_EQ = "="
REL_GE = ">="
_RELATIONS = (REL_LE, REL_EQ, REL_GE)

_AT_LOWER = 0
_AT_UPPER = 1
_BASIC = 2


class SimplexError(RuntimeError):
    """Numerical breakdown or resource exhaustion during a solve."""


class SolveKind(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    TIMED_OUT = "timed_out"


@dataclass(frozen=True)
class SolveStatus:
    kind: SolveKind
    x: np.ndarray | None = None
    objective: float | None = None

    @classmethod
    def feasible(cls, x: np.ndarray, objective: float) -> "SolveStatus":
        return cls(SolveKind.FEASIBLE, x, objective)

    @classmethod
    def infeasible(cls) -> "SolveStatus":
        return cls(SolveKind.INFEASIBLE)

    @classmethod
    def timed_out(cls) -> "SolveStatus":
        return cls(SolveKind.TIMED_OUT)


@dataclass
class LinearProgram:
    """Dense LP: optimize objective subject to rows and finite variable bounds."""

    objective: np.ndarray
    sense: str  # "max" | "min"
    rows: np.ndarray  # (m, nvars)
    relations: list[str]
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=np.float64)
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        self.rhs = np.atleast_1d(np.asarray(self.rhs, dtype=np.float64))
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        n = self.objective.size
        if self.rows.size == 0:
            self.rows = self.rows.reshape(0, n)
        if self.sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")
        if self.rows.shape[1] != n:
            raise ValueError(
                f"rows have {self.rows.shape[1]} columns, objective has {n}"
            )
        m = self.rows.shape[0]
        if self.rhs.shape != (m,) or len(self.relations) != m:
            raise ValueError("rhs/relations lengths must match the row count")
        for rel in self.relations:
            if rel not in _RELATIONS:
                raise ValueError(f"unknown relation {rel!r}")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bound vectors must match the variable count")
        if not (np.isfinite(self.lower).all() and np.isfinite(self.upper).all()):
            raise ValueError("all variable bounds must be finite")
        if np.any(self.lower > self.upper):
            bad = int(np.argmax(self.lower > self.upper))
            raise ValueError(f"variable {bad} has lower bound above upper bound")

    @property
    def num_vars(self) -> int:
        return self.objective.size

    @property
    def num_rows(self) -> int:
        return self.rows.shape[0]


class _Tableau:
    """Mutable solver state over the slack/artificial-extended column set."""

    def __init__(self, lp: LinearProgram, tol: float):
        self.tol = tol
        n, m = lp.num_vars, lp.num_rows
        self.n = n
        self.m = m

        slack_rows = [i for i in range(m) if lp.relations[i] != REL_EQ]
        ns = len(slack_rows)
        total = n + ns + m  # structural + slacks + one artificial per row

        A = np.zeros((m, total))
        A[:, :n] = lp.rows
        lower = np.empty(total)
        upper = np.empty(total)
        lower[:n] = lp.lower
        upper[:n] = lp.upper
        for j, i in enumerate(slack_rows):
            A[i, n + j] = 1.0
            if lp.relations[i] == REL_LE:
                lower[n + j], upper[n + j] = 0.0, np.inf
            else:
                lower[n + j], upper[n + j] = -np.inf, 0.0
        self.art_start = n + ns
        lower[self.art_start:] = 0.0
        upper[self.art_start:] = np.inf

        self.A = A
        self.b = lp.rhs.copy()
        self.lower = lower
        self.upper = upper

        # start nonbasic at the finite bound nearest zero (slacks at 0)
        xcol = np.where(np.isfinite(lower), lower, 0.0)
        prefer_upper = np.isfinite(upper) & (np.abs(upper) < np.abs(xcol))
        prefer_upper[~np.isfinite(lower)] = False
        xcol = np.where(prefer_upper, upper, xcol)
        xcol[self.art_start:] = 0.0
        self.status = np.where(prefer_upper, _AT_UPPER, _AT_LOWER).astype(np.int8)
        self.status[~np.isfinite(lower)] = _AT_UPPER  # >= slacks rest at 0 = upper

        # prefer the row's slack as the initial basic variable when its value
        # b - A x0 already fits the slack bounds; otherwise fall back to an
        # artificial absorbing the residual. Unused artificials are pinned.
        residual = self.b - A[:, :n] @ xcol[:n]
        self.basis = np.empty(m, dtype=np.int64)
        sign = np.ones(m)
        slack_of_row = {i: n + j for j, i in enumerate(slack_rows)}
        for i in range(m):
            art = self.art_start + i
            s = slack_of_row.get(i)
            if s is not None and lower[s] - 1e-12 <= residual[i] <= upper[s] + 1e-12:
                self.basis[i] = s
                xcol[s] = residual[i]
                self.status[s] = _BASIC
                A[i, art] = 1.0
                lower[art] = upper[art] = 0.0
            else:
                if s is not None:
                    # slack rests at the bound nearest the residual
                    if residual[i] > upper[s]:
                        xcol[s] = upper[s]
                        self.status[s] = _AT_UPPER
                    else:
                        xcol[s] = lower[s]
                        self.status[s] = _AT_LOWER
                    residual[i] -= xcol[s]
                A[i, art] = 1.0 if residual[i] >= 0 else -1.0
                sign[i] = A[i, art]
                self.basis[i] = art
                xcol[art] = abs(residual[i])
                self.status[art] = _BASIC
        self.xcol = xcol

        # the initial basis matrix is diagonal (+-1), so B^-1 = diag(1/sign)
        self.T = A * sign[:, None]
        self.pivots = 0
        self.degenerate_run = 0
        self.bland = False

    # -- linear algebra ----------------------------------------------------

    def refactor(self):
        B = self.A[:, self.basis]
        try:
            self.T = np.linalg.solve(B, self.A)
        except np.linalg.LinAlgError as exc:
            raise SimplexError(f"singular basis during refactorization: {exc}") from exc
        nb = self.status != _BASIC
        rhs = self.b - self.A[:, nb] @ self.xcol[nb]
        xb = np.linalg.solve(B, rhs)
        self.xcol[self.basis] = xb

    def reduced_costs(self, c: np.ndarray) -> np.ndarray:
        d = c - self.T.T @ c[self.basis]
        d[self.basis] = 0.0
        return d

    def pivot(self, row: int, col: int):
        piv = self.T[row, col]
        if abs(piv) < 1e-11:
            raise SimplexError(f"pivot element too small ({piv:g})")
        self.T[row] /= piv
        colvals = self.T[:, col].copy()
        colvals[row] = 0.0
        self.T -= np.outer(colvals, self.T[row])
        # keep the entering column numerically exact
        self.T[:, col] = 0.0
        self.T[row, col] = 1.0

    # -- simplex iterations -------------------------------------------------

    def _entering(self, d: np.ndarray, allow: np.ndarray) -> int | None:
        at_lo = (self.status == _AT_LOWER) & allow & (d > self.tol)
        at_hi = (self.status == _AT_UPPER) & allow & (d < -self.tol)
        eligible = at_lo | at_hi
        if not eligible.any():
            return None
        if self.bland:
            return int(np.argmax(eligible))
        scores = np.where(eligible, np.abs(d), -1.0)
        return int(np.argmax(scores))

    def _ratio_test(self, j: int, direction: float):
        w = self.T[:, j] * direction
        xb = self.xcol[self.basis]
        lb = self.lower[self.basis]
        ub = self.upper[self.basis]

        with np.errstate(divide="ignore", invalid="ignore"):
            dec = np.where(w > self.tol, (xb - lb) / w, np.inf)
            inc = np.where(w < -self.tol, (ub - xb) / (-w), np.inf)
        dec[~np.isfinite(lb)] = np.inf
        inc[~np.isfinite(ub)] = np.inf
        ratios = np.minimum(dec, inc)
        ratios = np.maximum(ratios, 0.0)

        t_flip = self.upper[j] - self.lower[j]
        t_rows = ratios.min() if ratios.size else np.inf
        if not np.isfinite(min(t_flip, t_rows)):
            raise SimplexError("unblocked improving direction (inconsistent bounds)")
        if t_flip <= t_rows:
            return t_flip, -1  # bound flip, no basis change
        near = ratios <= t_rows + 1e-9
        if self.bland:
            cand = np.where(near)[0]
            r = int(cand[np.argmin(self.basis[cand])])
        else:
            stability = np.where(near, np.abs(w), -1.0)
            r = int(np.argmax(stability))
        return float(ratios[r]), r

    def run(self, c: np.ndarray, allow: np.ndarray, max_pivots: int, refactor_every: int):
        d = self.reduced_costs(c)
        while True:
            j = self._entering(d, allow)
            if j is None:
                # rule out incremental drift before declaring optimality
                d = self.reduced_costs(c)
                j = self._entering(d, allow)
                if j is None:
                    return
            direction = 1.0 if self.status[j] == _AT_LOWER else -1.0
            t, r = self._ratio_test(j, direction)

            if t <= 1e-10:
                self.degenerate_run += 1
                if self.degenerate_run >= 1000:
                    self.bland = True
            else:
                self.degenerate_run = 0

            w = self.T[:, j]
            self.xcol[self.basis] -= direction * t * w
            if r < 0:
                # entering variable flips to its opposite bound
                self.status[j] = _AT_UPPER if direction > 0 else _AT_LOWER
                self.xcol[j] = self.upper[j] if direction > 0 else self.lower[j]
            else:
                leaving = self.basis[r]
                if direction * w[r] > 0:
                    self.status[leaving] = _AT_LOWER
                    self.xcol[leaving] = self.lower[leaving]
                else:
                    self.status[leaving] = _AT_UPPER
                    self.xcol[leaving] = self.upper[leaving]
                start = self.lower[j] if direction > 0 else self.upper[j]
                self.xcol[j] = start + direction * t
                dj = d[j]
                self.pivot(r, j)
                self.basis[r] = j
                self.status[j] = _BASIC
                d -= dj * self.T[r]
                d[j] = 0.0

            self.pivots += 1
            if self.pivots % refactor_every == 0:
                self.refactor()
                d = self.reduced_costs(c)
            if self.pivots > max_pivots:
                raise SimplexError(f"pivot limit exceeded ({max_pivots})")


def _verify_solution(lp: LinearProgram, x: np.ndarray, tol: float) -> None:
    act = lp.rows @ x
    for i, rel in enumerate(lp.relations):
        slack = 1e-6 * max(1.0, abs(lp.rhs[i]))
        ok = (
            act[i] <= lp.rhs[i] + slack
            if rel == REL_LE
            else act[i] >= lp.rhs[i] - slack
            if rel == REL_GE
            else abs(act[i] - lp.rhs[i]) <= slack
        )
        if not ok:
            raise SimplexError(
                f"solution violates row {i} ({rel} {lp.rhs[i]:g}, activity {act[i]:g})"
            )


def simplex_solve(
    lp: LinearProgram,
    feasibility_tol: float = 1e-7,
    max_pivots: int | None = None,
) -> SolveStatus:
    """Solve to an optimal vertex or prove infeasibility.

    Deterministic for fixed inputs. Raises SimplexError on numerical
    breakdown rather than returning a wrong status.
    """
    n = lp.num_vars
    sense = 1.0 if lp.sense == "max" else -1.0
    if lp.num_rows == 0:
        x = np.where(sense * lp.objective > 0, lp.upper, lp.lower)
        return SolveStatus.feasible(x, float(lp.objective @ x))

    tab = _Tableau(lp, feasibility_tol)
    if max_pivots is None:
        max_pivots = 20000 + 60 * (tab.m + tab.A.shape[1])
    refactor_every = 1000

    total = tab.A.shape[1]
    fixed = tab.upper - tab.lower <= 0
    art = np.zeros(total, dtype=bool)
    art[tab.art_start:] = True

    # phase 1: drive artificials to zero
    c1 = np.zeros(total)
    c1[art] = -1.0
    allow = ~fixed & ~art
    tab.run(c1, allow, max_pivots, refactor_every)
    tab.refactor()
    infeasibility = float(np.sum(np.maximum(tab.xcol[art], 0.0)))
    if infeasibility > feasibility_tol * max(1.0, np.abs(lp.rhs).max()):
        return SolveStatus.infeasible()

    # pin artificials at zero and optimize the real objective
    tab.lower[art] = 0.0
    tab.upper[art] = 0.0
    tab.xcol[art & (tab.status != _BASIC)] = 0.0
    c2 = np.zeros(total)
    c2[:n] = sense * lp.objective
    allow = (tab.upper - tab.lower > 0) & ~art
    tab.run(c2, allow, max_pivots, refactor_every)
    tab.refactor()

    x = np.clip(tab.xcol[:n], lp.lower, lp.upper)
    try:
        _verify_solution(lp, x, feasibility_tol)
    except SimplexError:
        tab.refactor()
        x = np.clip(tab.xcol[:n], lp.lower, lp.upper)
        _verify_solution(lp, x, feasibility_tol)
    return SolveStatus.feasible(x, float(lp.objective @ x))
