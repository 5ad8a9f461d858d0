"""Group fairness criteria: calibration, predictive parity and error-rate balance.

All rates are exact count ratios. A rate whose denominator is zero is
``None``; gaps involving such a rate are ``None`` as well and the matching
verdict is :attr:`Verdict.INSUFFICIENT_SUPPORT`.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from .dataio import format_float, rows_to_csv
from .errors import DataError, LabelsRequiredError
from .population import GroupId, Population
from .taxonomy import Doctrine

DEFAULT_TOLERANCE = 0.02
DEFAULT_BINS = 10


class Verdict(enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    INSUFFICIENT_SUPPORT = "insufficient support"
    PROCEDURE_LEVEL = "procedure-level, see decide"


def _ratio(num, den):
    return None if den == 0 else num / den


@dataclass(frozen=True)
class ConfusionStats:
    group: GroupId
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def size(self):
        return self.tp + self.fp + self.tn + self.fn

    @property
    def tpr(self):
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def fnr(self):
        return _ratio(self.fn, self.tp + self.fn)

    @property
    def fpr(self):
        return _ratio(self.fp, self.fp + self.tn)

    @property
    def ppv(self):
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def selection_rate(self):
        return _ratio(self.tp + self.fp, self.size)


def _decision_vector(pop, decisions):
    d = np.asarray(decisions)
    if d.shape != (len(pop),):
        raise DataError(f"decision vector has length {d.size}, population has {len(pop)}")
    if not np.isin(d, (0, 1)).all():
        raise DataError("decisions must be 0/1")
    return d.astype(bool)


def confusion_stats(pop: Population, decisions) -> list[ConfusionStats]:
    """Per-group confusion counts of ``decisions`` against the true labels."""
    y = pop.require_labels().astype(bool)
    d = _decision_vector(pop, decisions)
    out = []
    for g, m in zip(pop.groups, pop.masks()):
        yg, dg = y[m], d[m]
        out.append(ConfusionStats(
            g,
            tp=int(np.count_nonzero(yg & dg)),
            fp=int(np.count_nonzero(~yg & dg)),
            tn=int(np.count_nonzero(~yg & ~dg)),
            fn=int(np.count_nonzero(yg & ~dg)),
        ))
    return out


def max_pairwise_gap(values):
    """Largest absolute pairwise difference; ``None`` if any value is undefined.

    A single value (one group) has gap 0.
    """
    values = list(values)
    if any(v is None for v in values):
        return None
    if len(values) < 2:
        return 0.0
    return float(max(abs(a - b) for a, b in itertools.combinations(values, 2)))


# -- calibration ----------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationBin:
    lower: float
    upper: float
    positives: tuple[int, ...]
    counts: tuple[int, ...]

    @property
    def rates(self):
        return tuple(_ratio(p, c) for p, c in zip(self.positives, self.counts))

    @property
    def gap(self):
        """Max cross-group rate difference among groups with mass in the bin."""
        present = [r for r in self.rates if r is not None]
        if len(present) < 2:
            return None
        return max_pairwise_gap(present)


@dataclass(frozen=True)
class CalibrationResult:
    groups: tuple[GroupId, ...]
    bins: tuple[CalibrationBin, ...]
    max_gap: float | None
    unsupported_groups: tuple[GroupId, ...] = ()

    @property
    def insufficient_support(self):
        return self.max_gap is None or bool(self.unsupported_groups)


def _bin_edges(scores, bins):
    if isinstance(bins, (int, np.integer)):
        if bins < 1:
            raise ValueError("need at least one bin")
        lo, hi = float(scores.min()), float(scores.max())
        if lo == hi:
            return np.array([lo, hi])
        return np.linspace(lo, hi, int(bins) + 1)
    edges = np.asarray(bins, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be a strictly increasing sequence of length >= 2")
    if scores.min() < edges[0] or scores.max() > edges[-1]:
        raise ValueError("bin edges must cover the full score range")
    return edges


def assign_bins(scores, edges):
    """Bin index per score; bins are ``[e_i, e_{i+1})`` except the last, closed."""
    idx = np.searchsorted(edges, scores, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


def calibration_audit(pop: Population, bins=DEFAULT_BINS, min_bin_count=1) -> CalibrationResult:
    """Per-bin, per-group ``P(y=1 | score in bin, group)`` and the max cross-group gap.

    ``bins`` is either a bin count (equal width over the pooled score range)
    or explicit edges covering every score. A group takes part in a bin's gap
    when it has at least ``min_bin_count`` members there; the default counts
    any mass. Raising it keeps a handful of stragglers in an edge bin from
    dominating the maximum.
    """
    if min_bin_count < 1:
        raise ValueError("min_bin_count must be >= 1")
    y = pop.require_labels()
    edges = _bin_edges(pop.score, bins)
    idx = assign_bins(pop.score, edges)
    nb, k = len(edges) - 1, len(pop.groups)
    counts = np.zeros((nb, k), dtype=np.int64)
    positives = np.zeros((nb, k), dtype=np.int64)
    np.add.at(counts, (idx, pop.group), 1)
    np.add.at(positives, (idx, pop.group), y)

    out_bins = tuple(
        CalibrationBin(float(edges[b]), float(edges[b + 1]),
                       tuple(int(v) for v in positives[b]), tuple(int(v) for v in counts[b]))
        for b in range(nb)
    )
    if k == 1:
        return CalibrationResult(pop.groups, out_bins, 0.0)

    present = counts >= min_bin_count
    shared = present.sum(axis=1) >= 2
    unsupported = tuple(g for j, g in enumerate(pop.groups) if not np.any(shared & present[:, j]))
    gaps = [
        max_pairwise_gap(positives[b, present[b]] / counts[b, present[b]])
        for b in np.flatnonzero(shared)
    ]
    max_gap = max(gaps) if gaps else None
    return CalibrationResult(pop.groups, out_bins, max_gap, unsupported)


# -- predictive parity & error rates ------------------------------------------------


def group_ppvs(pop: Population, selected) -> list[float | None]:
    """``P(y=1 | selected, group)`` per group, ``None`` where nobody is selected."""
    y = pop.require_labels()
    sel = np.asarray(selected, dtype=bool)
    return [
        _ratio(int(np.count_nonzero(y[m & sel])), int(np.count_nonzero(m & sel)))
        for m in pop.masks()
    ]


def predictive_parity_gap(pop: Population, p: float) -> float | None:
    """Max pairwise difference of ``P(y=1 | score > p, group)``.

    Returns ``None`` when some group has nobody above ``p``.
    """
    return max_pairwise_gap(group_ppvs(pop, pop.score > p))


@dataclass(frozen=True)
class ErrorRateGaps:
    fpr_gap: float | None
    fnr_gap: float | None
    tpr_gap: float | None

    def __iter__(self):
        return iter((self.fpr_gap, self.fnr_gap, self.tpr_gap))


def gaps_from_stats(stats) -> ErrorRateGaps:
    return ErrorRateGaps(
        fpr_gap=max_pairwise_gap(s.fpr for s in stats),
        fnr_gap=max_pairwise_gap(s.fnr for s in stats),
        tpr_gap=max_pairwise_gap(s.tpr for s in stats),
    )


def error_rate_gaps(pop: Population, decisions) -> ErrorRateGaps:
    """FPR, FNR and TPR gaps (max pairwise) of a binary decision vector."""
    return gaps_from_stats(confusion_stats(pop, decisions))


# -- assembled audit ---------------------------------------------------------------


@dataclass(frozen=True)
class Tolerances:
    calibration: float = DEFAULT_TOLERANCE
    predictive_parity: float = DEFAULT_TOLERANCE
    fpr: float = DEFAULT_TOLERANCE
    fnr: float = DEFAULT_TOLERANCE
    tpr: float = DEFAULT_TOLERANCE

    @classmethod
    def uniform(cls, tol):
        return cls(tol, tol, tol, tol, tol)


def verdict(gap, tol):
    if gap is None:
        return Verdict.INSUFFICIENT_SUPPORT
    return Verdict.PASS if gap <= tol else Verdict.FAIL


def _combine(*verdicts):
    if any(v is Verdict.FAIL for v in verdicts):
        return Verdict.FAIL
    if any(v is Verdict.INSUFFICIENT_SUPPORT for v in verdicts):
        return Verdict.INSUFFICIENT_SUPPORT
    return Verdict.PASS


# metric -> doctrine whose fair-contest criterion it codifies
METRIC_DOCTRINE = {
    "calibration": Doctrine.FORMAL,
    "predictive_parity": Doctrine.FORMAL,
    "fpr": Doctrine.FORMAL_PLUS,
    "fnr": Doctrine.FORMAL_PLUS,
    "tpr": Doctrine.FORMAL_PLUS,
}


@dataclass(frozen=True)
class AuditReport:
    per_group: tuple[ConfusionStats, ...]
    calibration: CalibrationResult
    predictive_parity_gap: float | None
    fpr_gap: float | None
    fnr_gap: float | None
    tpr_gap: float | None
    tolerances: Tolerances
    threshold: float | None = None
    blind: bool = False
    metric_verdicts: dict = field(default_factory=dict)
    doctrine_verdicts: dict = field(default_factory=dict)

    def gap(self, metric):
        return {
            "calibration": self.calibration.max_gap,
            "predictive_parity": self.predictive_parity_gap,
            "fpr": self.fpr_gap,
            "fnr": self.fnr_gap,
            "tpr": self.tpr_gap,
        }[metric]

    def to_rows(self):
        """Flat ``(metric, groups, value, verdict)`` rows for plotting."""
        rows = []
        for s in self.per_group:
            for name in ("tp", "fp", "tn", "fn"):
                rows.append((f"count_{name}", s.group.label, str(getattr(s, name)), ""))
            for name in ("tpr", "fpr", "fnr", "ppv", "selection_rate"):
                rows.append((name, s.group.label, format_float(getattr(s, name)), ""))
        labels = [g.label for g in self.calibration.groups]
        for b, cb in enumerate(self.calibration.bins):
            for label, rate in zip(labels, cb.rates):
                rows.append((f"calibration_bin_{b}", label, format_float(rate), ""))
        all_groups = "|".join(g.label for g in self.calibration.groups)
        for metric in METRIC_DOCTRINE:
            rows.append((f"{metric}_gap", all_groups, format_float(self.gap(metric)),
                         self.metric_verdicts[metric].value))
        for doctrine, v in self.doctrine_verdicts.items():
            rows.append((f"doctrine_{doctrine.value}", all_groups, "", v.value))
        return rows

    def to_csv(self):
        return rows_to_csv(["metric", "groups", "value", "verdict"], self.to_rows())

    def to_text(self):
        def fmt(x):
            return "undefined" if x is None else f"{x:.6f}"

        lines = ["FAIRNESS AUDIT", "=============="]
        if self.threshold is not None:
            lines.append(f"threshold p = {self.threshold!r} (decision: score > p)")
        else:
            lines.append("decisions supplied externally")
        if self.blind:
            lines.append("mode: blind (group column dropped)")
        lines += ["", "Per-group confusion statistics",
                  f"{'group':<10}{'size':>8}{'tp':>8}{'fp':>8}{'tn':>8}{'fn':>8}"
                  f"{'tpr':>11}{'fpr':>11}{'fnr':>11}{'ppv':>11}"]
        for s in self.per_group:
            lines.append(
                f"{s.group.label:<10}{s.size:>8}{s.tp:>8}{s.fp:>8}{s.tn:>8}{s.fn:>8}"
                + "".join(f"{fmt(v):>11}" for v in (s.tpr, s.fpr, s.fnr, s.ppv))
            )
        lines += ["", "Calibration by score bin (P(y=1 | bin, group))"]
        labels = [g.label for g in self.calibration.groups]
        lines.append(f"{'bin':<26}" + "".join(f"{lab:>12}" for lab in labels) + f"{'gap':>12}")
        for cb in self.calibration.bins:
            rng = f"[{cb.lower:.4f}, {cb.upper:.4f}]"
            lines.append(f"{rng:<26}" + "".join(f"{fmt(r):>12}" for r in cb.rates) + f"{fmt(cb.gap):>12}")
        if self.calibration.unsupported_groups:
            names = ", ".join(g.label for g in self.calibration.unsupported_groups)
            lines.append(f"insufficient support: no shared bin for {names}")
        lines += ["", "Criteria (Fairness as Equal Opportunity taxonomy)",
                  f"{'criterion':<20}{'doctrine':<32}{'gap':>12}{'tol':>8}  verdict"]
        tol = self.tolerances
        tols = {"calibration": tol.calibration, "predictive_parity": tol.predictive_parity,
                "fpr": tol.fpr, "fnr": tol.fnr, "tpr": tol.tpr}
        for metric, doctrine in METRIC_DOCTRINE.items():
            lines.append(f"{metric:<20}{doctrine.title:<32}{fmt(self.gap(metric)):>12}"
                         f"{tols[metric]:>8.3f}  {self.metric_verdicts[metric].value}")
        lines += ["", "Doctrine verdicts",
                  f"{'doctrine':<32}{'view':<40}verdict"]
        for doctrine, v in self.doctrine_verdicts.items():
            view = f"{doctrine.facing}-facing, {doctrine.concern}"
            lines.append(f"{doctrine.title:<32}{view:<40}{v.value}")
        return "\n".join(lines) + "\n"


def audit(pop: Population, threshold=None, decisions=None, tolerances=None,
          bins=DEFAULT_BINS, blind=False, min_bin_count=1) -> AuditReport:
    """Assemble every criterion into an :class:`AuditReport`.

    Exactly one of ``threshold`` (decisions are ``score > threshold``) or an
    explicit ``decisions`` vector must be given. Predictive parity is measured
    over the selected set, which for a threshold is ``score > threshold``.
    ``blind=True`` drops the group column first, so every gap is trivially 0.
    """
    if (threshold is None) == (decisions is None):
        raise ValueError("pass exactly one of threshold or decisions")
    if not pop.is_labeled:
        raise LabelsRequiredError()
    if blind:
        pop = pop.blind()
    tolerances = tolerances or Tolerances()
    d = (pop.score > threshold) if threshold is not None else _decision_vector(pop, decisions)

    stats = tuple(confusion_stats(pop, d.astype(np.int8)))
    cal = calibration_audit(pop, bins, min_bin_count)
    pp_gap = max_pairwise_gap(group_ppvs(pop, d))
    er = gaps_from_stats(stats)

    metric_verdicts = {
        "calibration": Verdict.INSUFFICIENT_SUPPORT if cal.insufficient_support
        else verdict(cal.max_gap, tolerances.calibration),
        "predictive_parity": verdict(pp_gap, tolerances.predictive_parity),
        "fpr": verdict(er.fpr_gap, tolerances.fpr),
        "fnr": verdict(er.fnr_gap, tolerances.fnr),
        "tpr": verdict(er.tpr_gap, tolerances.tpr),
    }
    doctrine_verdicts = {
        Doctrine.FORMAL: _combine(metric_verdicts["calibration"], metric_verdicts["predictive_parity"]),
        Doctrine.FORMAL_PLUS: _combine(metric_verdicts["fpr"], metric_verdicts["fnr"], metric_verdicts["tpr"]),
        Doctrine.LUCK_EGALITARIAN: Verdict.PROCEDURE_LEVEL,
        Doctrine.RAWLSIAN: Verdict.PROCEDURE_LEVEL,
    }
    return AuditReport(
        per_group=stats, calibration=cal, predictive_parity_gap=pp_gap,
        fpr_gap=er.fpr_gap, fnr_gap=er.fnr_gap, tpr_gap=er.tpr_gap,
        tolerances=tolerances, threshold=None if threshold is None else float(threshold),
        blind=blind, metric_verdicts=metric_verdicts, doctrine_verdicts=doctrine_verdicts,
    )
