"""MILP encoding of a dense ReLU network and of the negated stability property.

Per neuron, two continuous variables hold the pre- and post-activation
values, bounded by propagated layer bounds. Stable ReLUs collapse to
equalities; each unstable ReLU gets one phase binary and four big-M rows
whose constants come from that neuron's own pre-activation bounds. The
negated property adds, per output, a pair of violation indicator binaries
(output pushed below the lower or above the upper deviation bound, big-M
linearized from the output variable bounds) plus one covering row requiring
at least one indicator to fire.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..bounds import LayerBounds
from ..network import Activation, DenseNetwork
from ..stability import DeltaBounds, PerturbationBox
from .simplex import REL_EQ, REL_GE, REL_LE, LinearProgram


class EncodingError(ValueError):
    """The model lacks data required by an encoding step."""


@dataclass(frozen=True)
class MilpModel:
    """A LinearProgram plus the integrality and naming structure on top of it."""

    lp: LinearProgram
    binary_indices: tuple[int, ...]
    relu_binaries: tuple[tuple[int, int, int], ...]  # (var, layer, neuron)
    indicator_binaries: tuple[tuple[int, int], ...]  # per output: (below, above)
    input_indices: tuple[int, ...]
    output_indices: tuple[int, ...]

    @property
    def names(self) -> list[str]:
        return self.lp.names


def encode_network(
    net: DenseNetwork, box: PerturbationBox, layer_bounds: LayerBounds
) -> MilpModel:
    """Encode the network over the box as mixed-integer linear constraints.

    layer_bounds must cover every layer (symbolic interval propagation is the
    usual source); its pre-activation bounds both size the big-M constants
    and classify ReLU stability.
    """
    if len(layer_bounds.pre_lower) != len(net.layers):
        raise EncodingError(
            f"layer bounds cover {len(layer_bounds.pre_lower)} layers, "
            f"network has {len(net.layers)}"
        )
    n = net.input_dim
    names: list[str] = [f"x[{j}]" for j in range(n)]
    lower: list[float] = list(box.lower)
    upper: list[float] = list(box.upper)
    rows: list[np.ndarray] = []
    rels: list[str] = []
    rhs: list[float] = []
    relu_binaries: list[tuple[int, int, int]] = []

    def new_var(name: str, lo: float, hi: float) -> int:
        names.append(name)
        lower.append(lo)
        upper.append(hi)
        return len(names) - 1

    def add_row(coeffs: dict[int, float], rel: str, b: float) -> None:
        rows.append((coeffs, rel, b))  # densified once all variables exist

    prev_vars = list(range(n))
    for li, layer in enumerate(net.layers):
        pre_lo = layer_bounds.pre_lower[li]
        pre_hi = layer_bounds.pre_upper[li]
        post_lo = layer_bounds.post_lower[li]
        post_hi = layer_bounds.post_upper[li]
        if not (np.isfinite(pre_lo).all() and np.isfinite(pre_hi).all()):
            raise EncodingError(f"non-finite bounds for layer {li}")
        layer_vars = []
        for j in range(layer.out_dim):
            pre = new_var(f"pre[{li}][{j}]", float(pre_lo[j]), float(pre_hi[j]))
            post = new_var(f"post[{li}][{j}]", float(post_lo[j]), float(post_hi[j]))
            # pre = W row . previous post + bias
            coeffs = {pre: -1.0}
            for pj, var in enumerate(prev_vars):
                w = layer.weights[j, pj]
                if w != 0.0:
                    coeffs[var] = coeffs.get(var, 0.0) + w
            add_row(coeffs, REL_EQ, -float(layer.bias[j]))

            if layer.activation is Activation.LINEAR:
                add_row({post: 1.0, pre: -1.0}, REL_EQ, 0.0)
            else:
                l, u = float(pre_lo[j]), float(pre_hi[j])
                if l >= 0.0:
                    add_row({post: 1.0, pre: -1.0}, REL_EQ, 0.0)
                elif u <= 0.0:
                    add_row({post: 1.0}, REL_EQ, 0.0)
                else:
                    a = new_var(f"relu_phase[{li}][{j}]", 0.0, 1.0)
                    relu_binaries.append((a, li, j))
                    add_row({post: 1.0, pre: -1.0}, REL_GE, 0.0)  # post >= pre
                    add_row({post: 1.0}, REL_GE, 0.0)  # post >= 0
                    # post <= pre - l (1 - a)
                    add_row({post: 1.0, pre: -1.0, a: -l}, REL_LE, -l)
                    # post <= u a
                    add_row({post: 1.0, a: -u}, REL_LE, 0.0)
            layer_vars.append(post)
        prev_vars = layer_vars

    nvars = len(names)
    dense = np.zeros((len(rows), nvars))
    for i, (coeffs, rel, b) in enumerate(rows):
        for var, w in coeffs.items():
            dense[i, var] = w
        rels.append(rel)
        rhs.append(b)

    lp = LinearProgram(
        objective=np.zeros(nvars),
        sense="max",
        rows=dense,
        relations=rels,
        rhs=np.array(rhs),
        lower=np.array(lower),
        upper=np.array(upper),
        names=names,
    )
    return MilpModel(
        lp=lp,
        binary_indices=tuple(v for v, _, _ in relu_binaries),
        relu_binaries=tuple(relu_binaries),
        indicator_binaries=(),
        input_indices=tuple(range(n)),
        output_indices=tuple(prev_vars),
    )


def encode_negated_property(
    model: MilpModel, f_x: np.ndarray, deltas: DeltaBounds
) -> MilpModel:
    """Append the counterexample-search constraints to a network encoding.

    Feasible solutions of the result are exactly the box points pushing at
    least one output outside its deviation interval (non-strict at the
    boundary, as any linear encoding must be). The objective asks the
    relaxation to fire as many indicators as possible, which steers
    branch-and-bound toward concrete violations early.
    """
    if not model.output_indices:
        raise EncodingError("model has no output variables to constrain")
    f_x = np.asarray(f_x, dtype=np.float64)
    k = len(model.output_indices)
    if f_x.shape != (k,) or deltas.lower.shape != (k,):
        raise EncodingError(
            f"reference outputs/deltas must have length {k}, "
            f"got {f_x.shape} and {deltas.lower.shape}"
        )

    lp = model.lp
    old_n = lp.num_vars
    names = list(lp.names)
    lower = list(lp.lower)
    upper = list(lp.upper)
    new_rows: list[tuple[dict[int, float], str, float]] = []
    indicator_pairs: list[tuple[int, int]] = []

    for j, out_var in enumerate(model.output_indices):
        out_lo = lp.lower[out_var]
        out_hi = lp.upper[out_var]
        lo_target = float(f_x[j] + deltas.lower[j])
        hi_target = float(f_x[j] + deltas.upper[j])

        below = len(names)
        names.append(f"out_below[{j}]")
        # indicator can only fire when the output range reaches the target
        feasible_below = out_lo <= lo_target
        lower.append(0.0)
        upper.append(1.0 if feasible_below else 0.0)
        if feasible_below:
            m_below = max(0.0, out_hi - lo_target)
            # below = 1  =>  out <= lo_target
            new_rows.append(({out_var: 1.0, below: m_below}, REL_LE, lo_target + m_below))

        above = len(names)
        names.append(f"out_above[{j}]")
        feasible_above = out_hi >= hi_target
        lower.append(0.0)
        upper.append(1.0 if feasible_above else 0.0)
        if feasible_above:
            m_above = max(0.0, hi_target - out_lo)
            # above = 1  =>  out >= hi_target
            new_rows.append(({out_var: 1.0, above: -m_above}, REL_GE, hi_target - m_above))

        indicator_pairs.append((below, above))

    covering = {v: 1.0 for pair in indicator_pairs for v in pair}
    new_rows.append((covering, REL_GE, 1.0))

    nvars = len(names)
    dense = np.zeros((lp.num_rows + len(new_rows), nvars))
    dense[: lp.num_rows, :old_n] = lp.rows
    rels = list(lp.relations)
    rhs = list(lp.rhs)
    for i, (coeffs, rel, b) in enumerate(new_rows):
        for var, w in coeffs.items():
            dense[lp.num_rows + i, var] = w
        rels.append(rel)
        rhs.append(b)

    objective = np.zeros(nvars)
    for below, above in indicator_pairs:
        objective[below] = 1.0
        objective[above] = 1.0

    new_lp = LinearProgram(
        objective=objective,
        sense="max",
        rows=dense,
        relations=rels,
        rhs=np.array(rhs),
        lower=np.array(lower),
        upper=np.array(upper),
        names=names,
    )
    binaries = model.binary_indices + tuple(v for pair in indicator_pairs for v in pair)
    return MilpModel(
        lp=new_lp,
        binary_indices=binaries,
        relu_binaries=model.relu_binaries,
        indicator_binaries=tuple(indicator_pairs),
        input_indices=model.input_indices,
        output_indices=model.output_indices,
    )


def write_lp_text(model: MilpModel) -> str:
    """Human-readable constraint listing for debugging (not an interchange format)."""
    lp = model.lp
    lines = []
    terms = " + ".join(
        f"{lp.objective[j]:g} {lp.names[j]}"
        for j in range(lp.num_vars)
        if lp.objective[j] != 0.0
    )
    lines.append(f"{lp.sense} {terms if terms else '0'}")
    lines.append("subject to")
    for i in range(lp.num_rows):
        nz = np.nonzero(lp.rows[i])[0]
        expr = " + ".join(f"{lp.rows[i][j]:g} {lp.names[j]}" for j in nz)
        lines.append(f"  r{i}: {expr} {lp.relations[i]} {lp.rhs[i]:g}")
    lines.append("bounds")
    for j in range(lp.num_vars):
        lines.append(f"  {lp.lower[j]:g} <= {lp.names[j]} <= {lp.upper[j]:g}")
    if model.binary_indices:
        lines.append("binary")
        lines.append("  " + " ".join(lp.names[j] for j in model.binary_indices))
    return "\n".join(lines) + "\n"
