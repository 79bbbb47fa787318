"""Sequencing of verification bricks and report aggregation.

Points flow through the brick list in order; the first non-Unknown verdict
decides a point and later bricks never see it. Bricks declare what they can
prove (attacks only falsify, bound propagation only verifies, complete
methods do both) and the runner enforces those declarations. The report
keeps raw per-point records so per-output attack histograms and runtime
tables can be emitted without re-running anything.
"""

from __future__ import annotations

import csv
import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .attack import AttackConfig, attack_point
from .bounds import certify
from .network import DenseNetwork, forward
from .solver.complete import SolverConfig, complete_verify
from .stability import (
    StabilityConfig,
    Status,
    Verdict,
    Witness,
    build_box,
    compute_deltas,
)


class Capability(enum.Enum):
    CAN_VERIFY = "can_verify"
    CAN_FALSIFY = "can_falsify"


class BrickError(RuntimeError):
    """A brick misbehaved (e.g. returned a verdict beyond its capabilities)."""


@dataclass(frozen=True)
class Brick:
    label: str
    evaluator: Callable[[DenseNetwork, np.ndarray], Verdict]
    capabilities: frozenset[Capability]

    def can(self, capability: Capability) -> bool:
        return capability in self.capabilities


@dataclass
class PointRecord:
    point_id: int
    verdicts: list[tuple[str, Verdict]] = field(default_factory=list)
    final_status: Status = Status.UNKNOWN
    decided_by: str | None = None
    witness: Witness | None = None


@dataclass
class PipelineReport:
    brick_labels: list[str]
    brick_capabilities: dict[str, frozenset[Capability]]
    records: list[PointRecord]
    output_dim: int

    def per_brick(self) -> list[dict]:
        stats = []
        for label in self.brick_labels:
            tested = verified = falsified = 0
            runtime = 0.0
            for rec in self.records:
                for lbl, verdict in rec.verdicts:
                    if lbl != label:
                        continue
                    tested += 1
                    runtime += verdict.elapsed
                    if verdict.status is Status.VERIFIED:
                        verified += 1
                    elif verdict.status is Status.FALSIFIED:
                        falsified += 1
            stats.append(
                {
                    "label": label,
                    "tested": tested,
                    "verified": verified,
                    "falsified": falsified,
                    "runtime_s": runtime,
                }
            )
        return stats

    def totals(self) -> dict:
        out = {"points": len(self.records), "verified": 0, "falsified": 0, "unknown": 0}
        for rec in self.records:
            out[rec.final_status.value] += 1
        return out

    def attack_histogram(self) -> list[list[int]]:
        """Per output index, successful attack counts [toward upper, toward lower]."""
        hist = [[0, 0] for _ in range(self.output_dim)]
        for rec in self.records:
            for _label, verdict in rec.verdicts:
                for index, slot, success in verdict.info.get("attempts", []):
                    if success:
                        hist[index][slot] += 1
        return hist

    def to_json_dict(self) -> dict:
        points = []
        for rec in self.records:
            entry = {
                "id": rec.point_id,
                "status": rec.final_status.value,
                "decided_by": rec.decided_by,
                "bricks": {
                    lbl: {
                        "status": v.status.value,
                        "elapsed_s": v.elapsed,
                        "reason": v.reason,
                    }
                    for lbl, v in rec.verdicts
                },
            }
            if rec.witness is not None:
                entry["witness"] = {
                    "x_prime": [float(v) for v in rec.witness.x_prime],
                    "index": rec.witness.index,
                    "deviation": rec.witness.deviation,
                }
            points.append(entry)
        return {
            "per_brick": self.per_brick(),
            "points": points,
            "attack_histogram": self.attack_histogram(),
            "totals": self.totals(),
        }


def _verdict_within_capabilities(brick: Brick, verdict: Verdict) -> bool:
    if verdict.status is Status.VERIFIED:
        return brick.can(Capability.CAN_VERIFY)
    if verdict.status is Status.FALSIFIED:
        return brick.can(Capability.CAN_FALSIFY)
    return True


def _run_point(
    net: DenseNetwork, point_id: int, x: np.ndarray, bricks: list[Brick]
) -> PointRecord:
    rec = PointRecord(point_id)
    for brick in bricks:
        try:
            verdict = brick.evaluator(net, x)
            if not isinstance(verdict, Verdict):
                raise BrickError(f"brick {brick.label!r} returned {type(verdict)}")
            if not _verdict_within_capabilities(brick, verdict):
                raise BrickError(
                    f"brick {brick.label!r} returned {verdict.status.value} "
                    "beyond its declared capabilities"
                )
        except BrickError:
            raise
        except Exception as exc:  # point-level fault isolation
            verdict = Verdict(
                Status.UNKNOWN,
                decided_by=brick.label,
                reason=f"error: {exc}",
            )
        rec.verdicts.append((brick.label, verdict))
        if verdict.status is not Status.UNKNOWN:
            rec.final_status = verdict.status
            rec.decided_by = brick.label
            rec.witness = verdict.witness
            break
    return rec


def run_pipeline(
    net: DenseNetwork,
    dataset: np.ndarray,
    bricks: list[Brick],
    jobs: int = 1,
) -> PipelineReport:
    """Flow every dataset row through the bricks and aggregate the outcomes."""
    dataset = np.atleast_2d(np.asarray(dataset, dtype=np.float64))
    if dataset.size == 0:
        raise ValueError("dataset must be nonempty")
    if not bricks:
        raise ValueError("brick list must be nonempty")
    labels = [b.label for b in bricks]
    if len(set(labels)) != len(labels):
        raise ValueError("brick labels must be unique")

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(
                pool.map(
                    lambda i: _run_point(net, i, dataset[i], bricks),
                    range(len(dataset)),
                )
            )
        records.sort(key=lambda rec: rec.point_id)
    else:
        records = [
            _run_point(net, i, dataset[i], bricks) for i in range(len(dataset))
        ]
    return PipelineReport(
        brick_labels=labels,
        brick_capabilities={b.label: b.capabilities for b in bricks},
        records=records,
        output_dim=net.output_dim,
    )


# -- standard bricks ---------------------------------------------------------


def make_attack_brick(
    cfg: AttackConfig, property_cfg: StabilityConfig, seed: int | None = None
) -> Brick:
    success_counts: dict[int, int] = {}

    def evaluator(net: DenseNetwork, x: np.ndarray) -> Verdict:
        order = None
        if cfg.index_order == "by_success":
            order = sorted(
                range(net.output_dim),
                key=lambda i: (-success_counts.get(i, 0), i),
            )
        rng = None
        if cfg.restarts:
            rng = np.random.default_rng(seed if seed is not None else 0)
        verdict = attack_point(net, x, cfg, property_cfg, index_order=order, rng=rng)
        for index, _slot, success in verdict.info.get("attempts", []):
            if success:
                success_counts[index] = success_counts.get(index, 0) + 1
        return verdict

    return Brick("attack", evaluator, frozenset({Capability.CAN_FALSIFY}))


def make_bounds_brick(
    property_cfg: StabilityConfig, method: str = "best"
) -> Brick:
    def evaluator(net: DenseNetwork, x: np.ndarray) -> Verdict:
        f_x = forward(net, x)
        box = build_box(x, property_cfg.input_tolerance, property_cfg.abs_floor)
        deltas = compute_deltas(f_x, property_cfg)
        return certify(net, x, box, deltas, method=method)

    return Brick("bounds", evaluator, frozenset({Capability.CAN_VERIFY}))


def make_complete_brick(
    solver_cfg: SolverConfig, property_cfg: StabilityConfig
) -> Brick:
    def evaluator(net: DenseNetwork, x: np.ndarray) -> Verdict:
        return complete_verify(net, x, solver_cfg, property_cfg)

    return Brick(
        "complete",
        evaluator,
        frozenset({Capability.CAN_VERIFY, Capability.CAN_FALSIFY}),
    )


# -- summaries ---------------------------------------------------------------


def summarize_report(report: PipelineReport) -> tuple[str, dict]:
    """Table-style text plus a JSON-ready dict.

    Capability columns render '-' when a brick cannot prove that status at
    all and '0' when it can but decided nothing.
    """
    per_brick = report.per_brick()
    rows = []
    for stats in per_brick:
        caps = report.brick_capabilities[stats["label"]]
        can_verify = Capability.CAN_VERIFY in caps
        can_falsify = Capability.CAN_FALSIFY in caps
        rows.append(
            {
                "label": stats["label"],
                "tested": stats["tested"],
                "verified": stats["verified"] if can_verify else None,
                "falsified": stats["falsified"] if can_falsify else None,
                "runtime_s": stats["runtime_s"],
            }
        )
    summary = {
        "per_brick": rows,
        "totals": report.totals(),
        "attack_histogram": report.attack_histogram(),
    }

    def cell(value) -> str:
        return "-" if value is None else str(value)

    lines = [
        f"{'brick':<12}{'tested':>8}{'true':>8}{'false':>8}{'runtime_s':>12}"
    ]
    for row in rows:
        lines.append(
            f"{row['label']:<12}{row['tested']:>8}"
            f"{cell(row['verified']):>8}{cell(row['falsified']):>8}"
            f"{row['runtime_s']:>12.3f}"
        )
    totals = summary["totals"]
    lines.append(
        f"{'total':<12}{totals['points']:>8}{totals['verified']:>8}"
        f"{totals['falsified']:>8}"
        f"{sum(r['runtime_s'] for r in rows):>12.3f}"
    )
    lines.append(
        f"unknown: {totals['unknown']}"
    )
    return "\n".join(lines), summary


def write_histogram_csv(report: PipelineReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["output_index", "success_toward_upper", "success_toward_lower"])
        for i, (pos, neg) in enumerate(report.attack_histogram()):
            writer.writerow([i, pos, neg])
