"""Iterative proportional fitting of sample weights to population marginals.

One round is a pass over all marginals in declaration order; the pass for a
marginal rescales every tuple's weight by target(cell) / current(cell), so
that marginal is matched exactly (on cells with sample mass) before moving
on. Convergence is judged by the max relative cell discrepancy across all
marginals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .catalog import Marginal, SampleRelation
from .errors import ConfigError, EmptySampleError, StructuralZeroError

EPS = 1e-12


@dataclass
class IpfConfig:
    max_rounds: int = 1000
    tolerance: float = 1e-6
    zero_policy: str = "drop_and_renormalize"  # or "error"

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ConfigError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_rounds < 1:
            raise ConfigError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if self.zero_policy not in ("error", "drop_and_renormalize"):
            raise ConfigError(f"unknown zero_policy {self.zero_policy!r}")


@dataclass
class IpfReport:
    rounds: int
    discrepancies: list[float]  # final max relative discrepancy, per marginal
    converged: bool
    structural_zeros: list[tuple[int, object]] = field(default_factory=list)
    dropped_mass: list[float] = field(default_factory=list)

    def max_discrepancy(self) -> float:
        return max(self.discrepancies) if self.discrepancies else 0.0


def cell_of(row: tuple, marginal: Marginal, index: dict[str, int]):
    """The (binned) cell key of `row` under `marginal`; values outside a
    numeric binning range clamp to the boundary bin."""
    return marginal.cell_of(row, index)


def _index_cells(sample: SampleRelation, marginal: Marginal):
    """Map target cells and sample rows into dense ids; id 0..k-1 are the
    marginal's cells, further ids are sample-only cells (implicit target 0)."""
    index = sample.index()
    ids = {key: i for i, key in enumerate(marginal.cells)}
    targets = [float(v) for v in marginal.cells.values()]
    row_ids = np.empty(len(sample.rows), dtype=np.int64)
    for r, row in enumerate(sample.rows):
        key = marginal.cell_of(row, index)
        if key not in ids:
            ids[key] = len(targets)
            targets.append(0.0)
        row_ids[r] = ids[key]
    return ids, np.asarray(targets), row_ids


def discrepancy(sample: SampleRelation, weights, marginal: Marginal) -> float:
    """Max over cells of |weighted_count - target| / max(target, eps), taken
    over the union of target cells and cells carrying sample mass."""
    weights = np.asarray(weights, dtype=float)
    _, targets, row_ids = _index_cells(sample, marginal)
    counts = np.bincount(row_ids, weights=weights, minlength=len(targets))
    return float(np.max(np.abs(counts - targets) / np.maximum(targets, EPS)))


def ipf_fit(sample: SampleRelation, marginals: list[Marginal],
            cfg: IpfConfig | None = None,
            initial_weights=None) -> tuple[np.ndarray, IpfReport]:
    """Fit sample weights to the given marginals; returns (weights, report)
    without mutating the sample."""
    cfg = cfg or IpfConfig()
    if not sample.rows:
        raise EmptySampleError(f"sample '{sample.name}' has no rows")
    if initial_weights is None:
        initial_weights = sample.weights if len(sample.weights) else np.ones(len(sample.rows))
    weights = np.asarray(initial_weights, dtype=float).copy()
    if weights.shape != (len(sample.rows),):
        raise ConfigError("initial weights must align with sample rows")
    if np.any(weights < 0) or not np.any(weights > 0):
        raise EmptySampleError("initial weights must be nonnegative and not all zero")
    if not marginals:
        return weights, IpfReport(0, [], True)

    plans = []
    structural: list[tuple[int, object]] = []
    dropped: list[float] = []
    for m_pos, marginal in enumerate(marginals):
        ids, targets, row_ids = _index_cells(sample, marginal)
        occupied = np.bincount(row_ids, minlength=len(targets)) > 0
        zero_cells = [key for key, i in ids.items()
                      if targets[i] > 0 and not occupied[i]]
        if zero_cells and cfg.zero_policy == "error":
            raise StructuralZeroError(
                f"marginal over {marginal.attributes} has target mass in cells "
                f"with no sample tuples: {zero_cells[:5]}"
                + ("..." if len(zero_cells) > 5 else ""))
        drop = 0.0
        if zero_cells:
            total = targets.sum()
            for key in zero_cells:
                i = ids[key]
                drop += targets[i]
                targets[i] = 0.0
                structural.append((m_pos, key))
            remaining = targets.sum()
            if remaining <= 0:
                raise StructuralZeroError(
                    f"all target mass of marginal over {marginal.attributes} "
                    "is unreachable from the sample")
            # Rescale remaining cells so the marginal keeps its declared total;
            # otherwise round-robin totals disagree and IPF cannot converge.
            targets *= total / remaining
        dropped.append(drop)
        plans.append((targets, row_ids))

    rounds = 0
    converged = False
    while rounds < cfg.max_rounds:
        rounds += 1
        for targets, row_ids in plans:
            counts = np.bincount(row_ids, weights=weights, minlength=len(targets))
            factors = np.zeros_like(targets)
            live = counts > 0
            factors[live] = targets[live] / counts[live]
            weights *= factors[row_ids]
        discs = []
        for targets, row_ids in plans:
            counts = np.bincount(row_ids, weights=weights, minlength=len(targets))
            discs.append(float(np.max(
                np.abs(counts - targets) / np.maximum(targets, EPS))))
        if max(discs) <= cfg.tolerance:
            converged = True
            break

    return weights, IpfReport(rounds, discs, converged, structural, dropped)
