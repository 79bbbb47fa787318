"""Sound output-range bounds over a perturbation box (the incomplete brick).

Three methods of increasing sophistication:

* interval_propagate: plain interval arithmetic layer by layer.
* symbolic_propagate: one affine lower and one affine upper expression per
  neuron in the input variables, concretized over the box. Captures
  cancellation that plain intervals lose; its concrete bounds are clipped
  against the running interval bounds so they can never be looser.
* crown_backward: backward substitution of linear relaxations from each
  output to the input, using precomputed pre-activation bounds to classify
  ReLU stability.

Certification succeeds when the concretized output interval fits inside the
allowed deviation envelope (closed comparisons on both sides).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .network import Activation, DenseNetwork, forward
from .stability import (
    DeltaBounds,
    PerturbationBox,
    Status,
    Verdict,
)

METHODS = ("interval", "symbolic", "crown", "best")


@dataclass(frozen=True)
class LayerBounds:
    """Concrete pre/post-activation bounds per layer over a given box.

    Post bounds are the exact activation image of the pre bounds: the ReLU
    image for ReLU layers and the pre bounds themselves for linear layers.
    """

    input_lower: np.ndarray
    input_upper: np.ndarray
    pre_lower: tuple[np.ndarray, ...]
    pre_upper: tuple[np.ndarray, ...]
    post_lower: tuple[np.ndarray, ...]
    post_upper: tuple[np.ndarray, ...]

    @property
    def output_lower(self) -> np.ndarray:
        return self.post_lower[-1]

    @property
    def output_upper(self) -> np.ndarray:
        return self.post_upper[-1]


@dataclass(frozen=True)
class LinearRelaxation:
    """Affine bounding functions of the input, one pair per target output.

    For every x' in the box:
    lower_coeffs @ x' + lower_const <= f(x') <= upper_coeffs @ x' + upper_const.
    """

    lower_coeffs: np.ndarray
    lower_const: np.ndarray
    upper_coeffs: np.ndarray
    upper_const: np.ndarray

    def concretize(self, box: PerturbationBox) -> tuple[np.ndarray, np.ndarray]:
        lo = (
            np.clip(self.lower_coeffs, 0.0, None) @ box.lower
            + np.clip(self.lower_coeffs, None, 0.0) @ box.upper
            + self.lower_const
        )
        hi = (
            np.clip(self.upper_coeffs, 0.0, None) @ box.upper
            + np.clip(self.upper_coeffs, None, 0.0) @ box.lower
            + self.upper_const
        )
        return lo, hi


def _relu_image(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.maximum(lo, 0.0), np.maximum(hi, 0.0)


def interval_propagate(net: DenseNetwork, box: PerturbationBox) -> LayerBounds:
    """Plain interval arithmetic through every layer (positive/negative weight split)."""
    lo, hi = box.lower, box.upper
    pre_lo, pre_hi, post_lo, post_hi = [], [], [], []
    for layer in net.layers:
        w_pos = np.clip(layer.weights, 0.0, None)
        w_neg = np.clip(layer.weights, None, 0.0)
        p_lo = w_pos @ lo + w_neg @ hi + layer.bias
        p_hi = w_pos @ hi + w_neg @ lo + layer.bias
        if layer.activation is Activation.RELU:
            q_lo, q_hi = _relu_image(p_lo, p_hi)
        else:
            q_lo, q_hi = p_lo, p_hi
        pre_lo.append(p_lo)
        pre_hi.append(p_hi)
        post_lo.append(q_lo)
        post_hi.append(q_hi)
        lo, hi = q_lo, q_hi
    return LayerBounds(
        box.lower, box.upper,
        tuple(pre_lo), tuple(pre_hi), tuple(post_lo), tuple(post_hi),
    )


def _affine_through(
    weights: np.ndarray,
    bias: np.ndarray,
    lo_c: np.ndarray, lo_k: np.ndarray,
    hi_c: np.ndarray, hi_k: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Push a per-neuron pair of affine bounds through an affine layer."""
    w_pos = np.clip(weights, 0.0, None)
    w_neg = np.clip(weights, None, 0.0)
    new_lo_c = w_pos @ lo_c + w_neg @ hi_c
    new_lo_k = w_pos @ lo_k + w_neg @ hi_k + bias
    new_hi_c = w_pos @ hi_c + w_neg @ lo_c
    new_hi_k = w_pos @ hi_k + w_neg @ lo_k + bias
    return new_lo_c, new_lo_k, new_hi_c, new_hi_k


def _concretize(coeffs: np.ndarray, const: np.ndarray, box: PerturbationBox, upper: bool):
    if upper:
        return (
            np.clip(coeffs, 0.0, None) @ box.upper
            + np.clip(coeffs, None, 0.0) @ box.lower
            + const
        )
    return (
        np.clip(coeffs, 0.0, None) @ box.lower
        + np.clip(coeffs, None, 0.0) @ box.upper
        + const
    )


def symbolic_propagate(
    net: DenseNetwork, box: PerturbationBox
) -> tuple[LayerBounds, LinearRelaxation]:
    """Forward propagation of affine lower/upper expressions per neuron.

    Stable ReLUs pass expressions through exactly (or zero them); unstable
    ReLUs get a chord upper relaxation and a {0,1}-slope lower relaxation.
    Concrete bounds are tightened with interval arithmetic on the previous
    layer's post bounds, so the result is never looser than plain intervals.
    """
    n = net.input_dim
    lo_c = np.eye(n)
    lo_k = np.zeros(n)
    hi_c = np.eye(n)
    hi_k = np.zeros(n)
    # concrete post bounds of the "previous layer" (the inputs to start)
    prev_lo, prev_hi = box.lower, box.upper

    pre_lo_all, pre_hi_all, post_lo_all, post_hi_all = [], [], [], []
    for layer in net.layers:
        lo_c, lo_k, hi_c, hi_k = _affine_through(
            layer.weights, layer.bias, lo_c, lo_k, hi_c, hi_k
        )
        p_lo = _concretize(lo_c, lo_k, box, upper=False)
        p_hi = _concretize(hi_c, hi_k, box, upper=True)
        # interval arithmetic on the previous post bounds; intersection of two
        # sound bounds stays sound and guarantees domination over intervals
        w_pos = np.clip(layer.weights, 0.0, None)
        w_neg = np.clip(layer.weights, None, 0.0)
        p_lo = np.maximum(p_lo, w_pos @ prev_lo + w_neg @ prev_hi + layer.bias)
        p_hi = np.minimum(p_hi, w_pos @ prev_hi + w_neg @ prev_lo + layer.bias)

        if layer.activation is Activation.RELU:
            q_lo, q_hi = _relu_image(p_lo, p_hi)
            active = p_lo >= 0.0
            inactive = p_hi <= 0.0
            unstable = ~(active | inactive)

            new_lo_c = np.where(active[:, None], lo_c, 0.0)
            new_lo_k = np.where(active, lo_k, 0.0)
            new_hi_c = np.where(active[:, None], hi_c, 0.0)
            new_hi_k = np.where(active, hi_k, 0.0)
            if unstable.any():
                l = p_lo[unstable]
                u = p_hi[unstable]
                slope = u / (u - l)
                # upper: chord through (l, 0) and (u, u) applied to the upper expr
                new_hi_c[unstable] = slope[:, None] * hi_c[unstable]
                new_hi_k[unstable] = slope * (hi_k[unstable] - l)
                # lower: keep the expression where the active area dominates, else 0
                keep = u >= -l
                kept = unstable.copy()
                kept[unstable] = keep
                new_lo_c[kept] = lo_c[kept]
                new_lo_k[kept] = lo_k[kept]
            lo_c, lo_k, hi_c, hi_k = new_lo_c, new_lo_k, new_hi_c, new_hi_k
        else:
            q_lo, q_hi = p_lo, p_hi

        pre_lo_all.append(p_lo)
        pre_hi_all.append(p_hi)
        post_lo_all.append(q_lo)
        post_hi_all.append(q_hi)
        prev_lo, prev_hi = q_lo, q_hi

    layer_bounds = LayerBounds(
        box.lower, box.upper,
        tuple(pre_lo_all), tuple(pre_hi_all), tuple(post_lo_all), tuple(post_hi_all),
    )
    relaxation = LinearRelaxation(lo_c, lo_k, hi_c, hi_k)
    return layer_bounds, relaxation


def crown_backward(
    net: DenseNetwork, box: PerturbationBox, layer_bounds: LayerBounds
) -> LinearRelaxation:
    """Backward linear relaxation from every output through all layers.

    Unstable ReLUs use the chord u/(u-l) upper relaxation and an adaptive
    {0,1} lower slope (1 when u >= |l|). The provided layer bounds classify
    stability; they may come from interval or symbolic propagation.
    """
    k = net.output_dim
    # affine bounds on the outputs as functions of the current layer's POST activations
    up_c = np.eye(k)
    up_k = np.zeros(k)
    lo_c = np.eye(k)
    lo_k = np.zeros(k)

    for idx in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[idx]
        if layer.activation is Activation.RELU:
            l = layer_bounds.pre_lower[idx]
            u = layer_bounds.pre_upper[idx]
            active = l >= 0.0
            inactive = u <= 0.0
            unstable = ~(active | inactive)

            ud = np.where(active, 1.0, 0.0)  # upper relaxation slope
            ub = np.zeros_like(l)
            ld = np.where(active, 1.0, 0.0)  # lower relaxation slope
            if unstable.any():
                lu = l[unstable]
                uu = u[unstable]
                ud[unstable] = uu / (uu - lu)
                ub[unstable] = -uu * lu / (uu - lu)
                ld[unstable] = (uu >= -lu).astype(np.float64)

            # picking the relaxation per sign of each coefficient
            up_pos = np.clip(up_c, 0.0, None)
            up_neg = np.clip(up_c, None, 0.0)
            lo_pos = np.clip(lo_c, 0.0, None)
            lo_neg = np.clip(lo_c, None, 0.0)
            up_k = up_k + up_pos @ ub
            up_c = up_pos * ud + up_neg * ld
            lo_k = lo_k + lo_neg @ ub
            lo_c = lo_pos * ld + lo_neg * ud

        # through the affine part: post = W z + b in terms of previous post z
        up_k = up_k + up_c @ layer.bias
        lo_k = lo_k + lo_c @ layer.bias
        up_c = up_c @ layer.weights
        lo_c = lo_c @ layer.weights

    return LinearRelaxation(lo_c, lo_k, up_c, up_k)


def output_bounds(
    net: DenseNetwork, box: PerturbationBox, method: str = "best"
) -> tuple[np.ndarray, np.ndarray]:
    """Concretized [L_i, U_i] per output for the chosen method.

    "best" intersects interval, symbolic, and CROWN bounds elementwise.
    """
    if method not in METHODS:
        raise ValueError(f"unknown bound method {method!r}, expected one of {METHODS}")
    if method == "interval":
        lb = interval_propagate(net, box)
        return lb.output_lower, lb.output_upper
    if method == "symbolic":
        lb, _ = symbolic_propagate(net, box)
        return lb.output_lower, lb.output_upper
    if method == "crown":
        lb, _ = symbolic_propagate(net, box)
        return crown_backward(net, box, lb).concretize(box)

    ib = interval_propagate(net, box)
    sb, _ = symbolic_propagate(net, box)
    clo, chi = crown_backward(net, box, sb).concretize(box)
    lo = np.maximum(np.maximum(ib.output_lower, sb.output_lower), clo)
    hi = np.minimum(np.minimum(ib.output_upper, sb.output_upper), chi)
    return lo, hi


def certify(
    net: DenseNetwork,
    x: np.ndarray,
    box: PerturbationBox,
    deltas: DeltaBounds,
    method: str = "best",
) -> Verdict:
    """Verified when the output bounds fit inside the deviation envelope.

    Sound but incomplete: the answer is Verified or Unknown, never Falsified.
    """
    start = time.perf_counter()
    f_x = forward(net, x)
    lo, hi = output_bounds(net, box, method)
    ok = bool(
        np.all(f_x + deltas.lower <= lo) and np.all(hi <= f_x + deltas.upper)
    )
    elapsed = time.perf_counter() - start
    info = {
        "method": method,
        "output_lower": lo,
        "output_upper": hi,
        "max_width": float(np.max(hi - lo)) if lo.size else 0.0,
    }
    status = Status.VERIFIED if ok else Status.UNKNOWN
    reason = None if ok else "bounds do not fit the deviation envelope"
    return Verdict(status, decided_by="bounds", elapsed=elapsed, reason=reason, info=info)
