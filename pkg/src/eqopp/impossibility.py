"""Calibration versus error-rate balance under unequal base rates.

Two routes. :func:`feasibility_search` works on rates: it imposes equal TPR
and FPR on two groups and asks whether their positive predictive values can
then also agree, using :func:`ppv_identity`. :func:`empirical_tradeoff` audits
a sweep of decision rules on an actual population and records the gaps each
one leaves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .dataio import format_float, rows_to_csv
from .errors import ConfigError
from .metrics import confusion_stats, gaps_from_stats, group_ppvs, max_pairwise_gap
from .population import GroupId, Population
from .procedures import DecisionRule, Formal, decide

DEFAULT_GRID_STEP = 0.005
DEFAULT_CORNER_MARGIN = 0.01


def ppv_identity(prevalence, tpr, fpr):
    """``prevalence*tpr / (prevalence*tpr + (1-prevalence)*fpr)``.

    Returns ``None`` when the denominator is zero (nobody predicted positive).
    """
    num = prevalence * tpr
    den = num + (1.0 - prevalence) * fpr
    if den == 0:
        return None
    return num / den


def _ppv_grid(prevalence, tpr, fpr):
    num = prevalence * tpr
    den = num + (1.0 - prevalence) * fpr
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


@dataclass(frozen=True)
class RatePoint:
    group: GroupId
    prevalence: float
    tpr: float
    fpr: float

    @property
    def ppv(self):
        return ppv_identity(self.prevalence, self.tpr, self.fpr)


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    witness: tuple[RatePoint, RatePoint] | None
    min_total_violation: float
    prev_a: float
    prev_b: float
    tolerance: float
    grid_step: float
    corners_excluded: bool

    def to_text(self):
        lines = [
            "IMPOSSIBILITY CHECK (equal TPR and FPR imposed; is PPV parity reachable?)",
            f"prevalence A = {self.prev_a!r}, prevalence B = {self.prev_b!r}",
            f"grid step = {self.grid_step!r}, tolerance = {self.tolerance!r}, "
            f"degenerate edges {'excluded' if self.corners_excluded else 'included'}",
            f"verdict: {'feasible' if self.feasible else 'infeasible'}",
            f"min total violation (ppv gap + fpr gap + fnr gap) = {self.min_total_violation!r}",
        ]
        if self.witness is not None:
            a, b = self.witness
            lines.append(f"witness: tpr = {a.tpr!r}, fpr = {a.fpr!r}, ppv A = {a.ppv!r}, ppv B = {b.ppv!r}")
        return "\n".join(lines) + "\n"


def _grid(step):
    if not (0 < step <= 0.1):
        raise ConfigError(f"grid_step must lie in (0, 0.1], got {step!r}")
    n = int(round(1.0 / step))
    return np.linspace(0.0, 1.0, n + 1), 1.0 / n


def feasibility_search(prev_a, prev_b, tolerance=0.01, grid_step=DEFAULT_GRID_STEP,
                       exclude_corners=True, corner_margin=DEFAULT_CORNER_MARGIN,
                       groups=(GroupId(0, "A"), GroupId(1, "B"))) -> FeasibilityResult:
    """Scan shared (TPR, FPR) pairs for one where both groups' PPVs agree.

    Because the two groups share TPR and FPR at every grid point, the FPR and
    FNR gaps are zero by construction and the total violation reduces to the
    PPV gap. PPV parity holds trivially wherever ``fpr == 0`` (PPV is 1 for
    both) or ``tpr == 0`` (PPV is 0 for both), which includes perfect
    prediction at ``(1, 0)``; with ``exclude_corners`` every point within
    ``corner_margin`` of those two edges is dropped.

    The grid is ``linspace(0, 1, round(1/grid_step) + 1)`` on both axes, so
    halving the step refines the grid.
    """
    for name, prev in (("prev_a", prev_a), ("prev_b", prev_b)):
        if not (0.0 < prev < 1.0):
            raise ConfigError(f"{name} must lie in (0, 1), got {prev!r}")
    axis, step = _grid(grid_step)
    tpr, fpr = np.meshgrid(axis, axis, indexing="ij")
    ppv_a = _ppv_grid(prev_a, tpr, fpr)
    ppv_b = _ppv_grid(prev_b, tpr, fpr)
    violation = np.abs(ppv_a - ppv_b)  # + fpr_gap + fnr_gap, both 0 here
    eligible = np.isfinite(violation)
    if exclude_corners:
        edge = corner_margin + 1e-12
        eligible &= (fpr > edge) & (tpr > edge)
    if not eligible.any():
        raise ConfigError("no eligible grid points; reduce the corner margin or the grid step")

    masked = np.where(eligible, violation, np.inf)
    best = masked.min()
    # among ties prefer the most accurate rule (largest tpr - fpr)
    ties = np.flatnonzero((masked == best).ravel())
    pick = ties[np.argmax((tpr - fpr).ravel()[ties])]
    i, j = np.unravel_index(pick, tpr.shape)
    feasible = bool(best <= tolerance)
    witness = None
    if feasible:
        t, f = float(tpr[i, j]), float(fpr[i, j])
        witness = (RatePoint(groups[0], float(prev_a), t, f), RatePoint(groups[1], float(prev_b), t, f))
    return FeasibilityResult(
        feasible=feasible, witness=witness, min_total_violation=float(best),
        prev_a=float(prev_a), prev_b=float(prev_b), tolerance=float(tolerance),
        grid_step=step, corners_excluded=bool(exclude_corners),
    )


# -- empirical route --------------------------------------------------------------


@dataclass(frozen=True)
class TradeoffRow:
    parameter: float
    ppv_gap: float | None
    fpr_gap: float | None
    fnr_gap: float | None

    def achieves(self, tol):
        """PPV and FPR gaps both strictly below ``tol`` (undefined never counts)."""
        return (self.ppv_gap is not None and self.fpr_gap is not None
                and self.ppv_gap < tol and self.fpr_gap < tol)


def _rule_parameter(rule):
    for attr in ("p", "q", "target_rate"):
        value = getattr(rule, attr, None)
        if value is not None:
            return float(value)
    return math.nan


def empirical_tradeoff(pop: Population, rules: Iterable[DecisionRule] | None = None,
                       n_points=200, seed=0) -> list[TradeoffRow]:
    """PPV/FPR/FNR gaps for each rule of a sweep.

    Without ``rules`` the sweep is ``n_points`` formal thresholds evenly spaced
    over the pooled score range.
    """
    if rules is None:
        rules = [Formal(float(p)) for p in threshold_grid(pop, n_points)]
    rows = []
    for rule in rules:
        outcome = decide(pop, rule, seed)
        stats = confusion_stats(pop, outcome.decisions)
        er = gaps_from_stats(stats)
        ppv_gap = max_pairwise_gap(group_ppvs(pop, outcome.selected))
        rows.append(TradeoffRow(_rule_parameter(rule), ppv_gap, er.fpr_gap, er.fnr_gap))
    return rows


def threshold_grid(pop: Population, n_points=200):
    return np.linspace(float(pop.score.min()), float(pop.score.max()), int(n_points))


def tradeoff_to_csv(rows):
    return rows_to_csv(
        ["parameter", "ppv_gap", "fpr_gap", "fnr_gap"],
        ((format_float(r.parameter), format_float(r.ppv_gap), format_float(r.fpr_gap),
          format_float(r.fnr_gap)) for r in rows),
    )
