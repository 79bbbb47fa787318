"""Reproducible stand-in models: synthetic datasets and trained surrogates.

Two analytic targets (the Rosenbrock function and a toy braking-distance
formula) plus a generator of fixed random networks of arbitrary shape for
scalability experiments. Everything is deterministic under the spec seed.
The braking-distance target is a physically-shaped toy, not any production
engineering model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import (
    Activation,
    DenseLayer,
    DenseNetwork,
    TrainingError,
    forward_batch,
    sgd_step,
)

GRAVITY = 9.81
REACTION_TIME_S = 1.0


def rosenbrock(points: np.ndarray) -> np.ndarray:
    """(1 - x)^2 + 100 (y - x^2)^2 per row; global minimum 0 at (1, 1)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    x, y = pts[:, 0], pts[:, 1]
    return ((1.0 - x) ** 2 + 100.0 * (y - x**2) ** 2)[:, None]


def braking_distance(points: np.ndarray) -> np.ndarray:
    """Stopping distance v^2 / (2 mu g) + t_r v for rows (speed, friction)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    v, mu = pts[:, 0], pts[:, 1]
    return (v**2 / (2.0 * mu * GRAVITY) + REACTION_TIME_S * v)[:, None]


_TARGETS = {
    "rosenbrock": (rosenbrock, np.array([[-2.0, 2.0], [-1.0, 3.0]])),
    "braking": (braking_distance, np.array([[5.0, 70.0], [0.2, 1.0]])),
}


@dataclass(frozen=True)
class SurrogateSpec:
    """What to train: target function, domain, architecture, budget, seed."""

    target: str = "rosenbrock"
    domain: np.ndarray | None = None  # (input_dim, 2) rows of [lo, hi]
    hidden: tuple[int, ...] = (16, 16)
    epochs: int = 2000
    batch_size: int = 32
    learning_rate: float = 0.05
    n_train: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.target not in _TARGETS:
            raise ValueError(
                f"unknown target {self.target!r}, expected one of {sorted(_TARGETS)}"
            )
        domain = self.domain
        if domain is None:
            domain = _TARGETS[self.target][1]
        domain = np.asarray(domain, dtype=np.float64)
        if domain.ndim != 2 or domain.shape[1] != 2 or np.any(domain[:, 0] >= domain[:, 1]):
            raise ValueError("domain must be (input_dim, 2) with lo < hi per row")
        object.__setattr__(self, "domain", domain)
        if self.epochs < 0 or self.batch_size < 1 or self.n_train < 1:
            raise ValueError("epochs must be >= 0, batch_size and n_train >= 1")

    @property
    def input_dim(self) -> int:
        return self.domain.shape[0]


def _normalize(values: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    span = hi - lo
    span = np.where(span > 0, span, 1.0)
    return 2.0 * (values - lo) / span - 1.0


def generate_dataset(spec: SurrogateSpec, n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform samples over the domain with analytic targets, both scaled
    per-feature to [-1, 1] (inputs by the domain, targets by observed range)."""
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    rng = np.random.default_rng(spec.seed)
    raw_x = rng.uniform(spec.domain[:, 0], spec.domain[:, 1], size=(n_points, spec.input_dim))
    raw_y = _TARGETS[spec.target][0](raw_x)
    xs = _normalize(raw_x, spec.domain[:, 0], spec.domain[:, 1])
    ys = _normalize(raw_y, raw_y.min(axis=0), raw_y.max(axis=0))
    return xs, ys


def init_network(widths: tuple[int, ...], seed: int) -> DenseNetwork:
    """Seeded uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] initialization."""
    if len(widths) < 2:
        raise ValueError("widths must include input and output sizes")
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(len(widths) - 1):
        fan_in, fan_out = widths[i], widths[i + 1]
        scale = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-scale, scale, size=(fan_out, fan_in))
        b = rng.uniform(-scale, scale, size=fan_out)
        act = Activation.LINEAR if i == len(widths) - 2 else Activation.RELU
        layers.append(DenseLayer(w, b, act))
    return DenseNetwork(tuple(layers))


def random_network(
    widths: tuple[int, ...],
    seed: int,
    weight_scale: float = 1.0,
    bias_scale: float = 1.0,
) -> DenseNetwork:
    """Fixed random net of the given shape (no training); scalability stand-in."""
    if len(widths) < 2:
        raise ValueError("widths must include input and output sizes")
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(len(widths) - 1):
        fan_in, fan_out = widths[i], widths[i + 1]
        w = rng.normal(0.0, weight_scale / np.sqrt(fan_in), size=(fan_out, fan_in))
        b = rng.normal(0.0, bias_scale, size=fan_out)
        act = Activation.LINEAR if i == len(widths) - 2 else Activation.RELU
        layers.append(DenseLayer(w, b, act))
    return DenseNetwork(tuple(layers))


def train_surrogate(
    spec: SurrogateSpec,
    checkpoint_epochs: tuple[int, ...] = (),
) -> tuple[DenseNetwork, list[float], dict[int, DenseNetwork]]:
    """Train an MLP on the spec's dataset with plain minibatch SGD.

    Returns the final network, the per-epoch mean training loss, and the
    requested epoch checkpoints (captured from the same run, so a sweep over
    epoch counts costs one training run).
    """
    xs, ys = generate_dataset(spec, spec.n_train)
    widths = (spec.input_dim, *spec.hidden, ys.shape[1])
    net = init_network(widths, spec.seed)
    rng = np.random.default_rng(spec.seed + 1)

    wanted = set(checkpoint_epochs)
    checkpoints: dict[int, DenseNetwork] = {}
    if 0 in wanted:
        checkpoints[0] = net
    log: list[float] = []
    for epoch in range(1, spec.epochs + 1):
        order = rng.permutation(len(xs))
        epoch_losses = []
        for start in range(0, len(xs), spec.batch_size):
            batch = order[start : start + spec.batch_size]
            try:
                net, loss = sgd_step(net, (xs[batch], ys[batch]), spec.learning_rate)
            except TrainingError as exc:
                raise TrainingError(f"diverged at epoch {epoch}: {exc}") from exc
            epoch_losses.append(loss)
        log.append(float(np.mean(epoch_losses)))
        if epoch in wanted:
            checkpoints[epoch] = net
    return net, log, checkpoints


def heldout_mse(net: DenseNetwork, spec: SurrogateSpec, n_points: int = 256) -> float:
    """MSE on a fresh draw from the same spec distribution (shifted seed)."""
    eval_spec = SurrogateSpec(
        target=spec.target,
        domain=spec.domain,
        hidden=spec.hidden,
        epochs=spec.epochs,
        batch_size=spec.batch_size,
        learning_rate=spec.learning_rate,
        n_train=spec.n_train,
        seed=spec.seed + 104729,
    )
    xs, ys = generate_dataset(eval_spec, n_points)
    return float(np.mean((forward_batch(net, xs) - ys) ** 2))


def write_dataset_csv(xs: np.ndarray, path: str | Path, header: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow([f"x{i}" for i in range(xs.shape[1])])
        for row in xs:
            writer.writerow([repr(float(v)) for v in row])


def load_dataset_csv(path: str | Path) -> np.ndarray:
    """Dataset CSV: one point per row, optional header."""
    rows = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if i == 0:
                    continue  # header
                raise ValueError(f"{path}: non-numeric value on line {i + 1}")
    if not rows:
        raise ValueError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: inconsistent column counts {sorted(widths)}")
    return np.array(rows, dtype=np.float64)


def write_training_log_csv(log: list[float], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mse"])
        for epoch, mse in enumerate(log, start=1):
            writer.writerow([epoch, repr(mse)])
