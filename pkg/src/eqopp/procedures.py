"""Doctrine-aligned allocation procedures.

Each rule maps a :class:`~eqopp.population.Population` to a
:class:`DecisionOutcome`: a 0/1 decision per individual, a resource amount per
individual (non-zero only under the Rawlsian rule) and a per-group rationale
recording what was actually applied.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

from .dataio import format_float, rows_to_csv
from .errors import ConfigError, DataError, InfeasibleFitError
from .population import EmpiricalQuantiles, Population
from .taxonomy import Doctrine

# absorbs float error when comparing counts against target * positives
_COUNT_EPS = 1e-9


def _check_finite(name, value):
    if not (isinstance(value, (int, float, np.floating)) and math.isfinite(value)):
        raise ConfigError(f"{name} must be a finite number, got {value!r}")


def _check_unit(name, value):
    _check_finite(name, value)
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {value!r}")


# -- resource response ---------------------------------------------------------


@dataclass(frozen=True)
class ResourceResponse:
    """Piecewise-linear, non-decreasing map from (score deficit + resources) to
    a success probability, constant beyond the outer knots.

    Parameters
    ----------
    xs : sequence of float
        Strictly increasing knot positions.
    ys : sequence of float
        Non-decreasing knot values in [0, 1].
    """

    xs: tuple[float, ...] = (-0.5, 0.0)
    ys: tuple[float, ...] = (0.0, 1.0)

    def __post_init__(self):
        xs = tuple(float(x) for x in self.xs)
        ys = tuple(float(y) for y in self.ys)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        if len(xs) != len(ys) or len(xs) < 2:
            raise ConfigError("resource response needs at least two (x, y) knots")
        if not all(math.isfinite(v) for v in xs + ys):
            raise ConfigError("resource response knots must be finite")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ConfigError("resource response knot positions must be strictly increasing")
        if any(b < a for a, b in zip(ys, ys[1:])):
            raise ConfigError("non-monotone resource response: knot values must be non-decreasing")
        if ys[0] < 0 or ys[-1] > 1:
            raise ConfigError("resource response values must lie in [0, 1]")

    @classmethod
    def parse(cls, text):
        """Parse ``"x:y,x:y,..."``."""
        try:
            pairs = [chunk.split(":") for chunk in text.split(",") if chunk.strip()]
            xs, ys = zip(*((float(a), float(b)) for a, b in pairs))
        except ValueError:
            raise ConfigError(f"cannot parse resource response {text!r}; expected 'x:y,x:y,...'") from None
        return cls(xs, ys)

    def __str__(self):
        return ",".join(f"{x!r}:{y!r}" for x, y in zip(self.xs, self.ys))

    def __call__(self, x):
        out = np.interp(np.asarray(x, dtype=float), self.xs, self.ys)
        return float(out) if out.ndim == 0 else out

    @property
    def max_slope(self):
        return max((y1 - y0) / (x1 - x0) for x0, x1, y0, y1 in
                   zip(self.xs, self.xs[1:], self.ys, self.ys[1:]))

    def inverse(self, level):
        """Smallest input reaching ``level`` (``-inf`` / ``+inf`` outside the range)."""
        xs, ys = self.xs, self.ys
        if level <= ys[0]:
            return -math.inf
        if level > ys[-1]:
            return math.inf
        j = int(np.searchsorted(ys, level, side="left"))
        return xs[j - 1] + (level - ys[j - 1]) * (xs[j] - xs[j - 1]) / (ys[j] - ys[j - 1])

    def inverse_right(self, level):
        """Largest input whose response does not exceed ``level``."""
        xs, ys = self.xs, self.ys
        if level < ys[0]:
            return -math.inf
        if level >= ys[-1]:
            return math.inf
        j = int(np.searchsorted(ys, level, side="right"))
        return xs[j - 1] + (level - ys[j - 1]) * (xs[j] - xs[j - 1]) / (ys[j] - ys[j - 1])


def water_fill(base, budget, response: ResourceResponse):
    """Allocate ``budget`` to raise the lowest success probabilities first.

    Each recipient ``i`` ends at ``response(base[i] + r[i])``. Resources go
    to whoever currently sits lowest until everyone shares one level, the
    budget runs out, or a flat stretch of the response would swallow the rest
    without lifting anybody. The result maximises the minimum probability and
    never touches the maximum, so it minimises the max-min spread.

    Returns
    -------
    numpy.ndarray
        Non-negative allocation aligned with ``base``; sums to at most ``budget``.
    """
    base = np.asarray(base, dtype=float)
    alloc = np.zeros_like(base)
    if base.size == 0 or budget <= 0:
        return alloc
    p = response(base)
    lo, top = float(p.min()), float(p.max())
    if lo >= top:
        return alloc

    ys = np.asarray(response.ys)
    levels = np.unique(np.concatenate([p, ys[(ys > lo) & (ys < top)]]))

    def need(level):
        return np.maximum(0.0, response.inverse(level) - base)

    spent = np.array([need(level).sum() for level in levels])
    tol = 1e-12 * max(1.0, budget)
    j = int(np.flatnonzero(spent <= budget + tol)[-1])
    if j == len(levels) - 1:
        return need(top)

    level = levels[j]
    active = p <= level
    target = (budget + base[active].sum()) / np.count_nonzero(active)
    if target <= response.inverse_right(level):
        return need(level)
    alloc[active] = target - base[active]
    return alloc


def spread(probabilities):
    probabilities = np.asarray(probabilities, dtype=float)
    return float(probabilities.max() - probabilities.min()) if probabilities.size else 0.0


# -- rules -----------------------------------------------------------------------


@dataclass(frozen=True)
class GroupThreshold:
    """Randomised threshold pair: ``score > upper`` selects, ``score <= lower``
    rejects, and scores in between are selected with probability ``mixing``."""

    lower: float
    upper: float
    mixing: float

    def __post_init__(self):
        _check_finite("lower threshold", self.lower)
        _check_finite("upper threshold", self.upper)
        _check_unit("mixing probability", self.mixing)
        if self.upper < self.lower:
            raise ConfigError("upper threshold must be >= lower threshold")


@dataclass(frozen=True)
class Formal:
    p: float
    doctrine = Doctrine.FORMAL

    def __post_init__(self):
        _check_finite("threshold p", self.p)


@dataclass(frozen=True)
class FormalPlus:
    thresholds: Mapping[str, GroupThreshold] = field(default_factory=dict)
    target_rate: float | None = None
    doctrine = Doctrine.FORMAL_PLUS

    def __post_init__(self):
        if self.target_rate is not None:
            _check_finite("target rate", self.target_rate)


@dataclass(frozen=True)
class LuckEgalitarian:
    q: float
    doctrine = Doctrine.LUCK_EGALITARIAN

    def __post_init__(self):
        _check_unit("quantile cut q", self.q)


@dataclass(frozen=True)
class Rawlsian:
    q: float
    budget: float = 0.0
    response: ResourceResponse = field(default_factory=ResourceResponse)
    reference: str | None = None
    doctrine = Doctrine.RAWLSIAN

    def __post_init__(self):
        _check_unit("quantile cut q", self.q)
        _check_finite("budget", self.budget)
        if self.budget < 0:
            raise ConfigError(f"budget must be >= 0, got {self.budget!r}")
        if not isinstance(self.response, ResourceResponse):
            raise ConfigError("response must be a ResourceResponse")


DecisionRule = Union[Formal, FormalPlus, LuckEgalitarian, Rawlsian]


@dataclass(frozen=True)
class DecisionOutcome:
    doctrine: Doctrine
    decisions: np.ndarray
    resources: np.ndarray
    rationale: dict

    def __post_init__(self):
        self.decisions.setflags(write=False)
        self.resources.setflags(write=False)

    @property
    def selected(self):
        return self.decisions.astype(bool)

    def to_csv(self, pop: Population):
        labels = [g.label for g in pop.groups]
        rows = (
            (i, labels[g], format_float(s), int(d), format_float(r))
            for i, (g, s, d, r) in enumerate(zip(pop.group, pop.score, self.decisions, self.resources))
        )
        return rows_to_csv(["id", "group", "score", "decision", "resources"], rows)

    def rationale_json(self):
        return json.dumps({"doctrine": self.doctrine.value, "groups": self.rationale},
                          indent=2, sort_keys=True) + "\n"


def _outcome(doctrine, pop, selected, rationale, resources=None):
    if resources is None:
        resources = np.zeros(len(pop))
    return DecisionOutcome(doctrine, selected.astype(np.int8), np.asarray(resources, dtype=float), rationale)


# -- formal ------------------------------------------------------------------------


def decide_formal(pop: Population, p: float) -> DecisionOutcome:
    """Select everyone scoring strictly above ``p``, regardless of group."""
    _check_finite("threshold p", p)
    selected = pop.score > p
    rationale = {
        g.label: {"threshold": float(p), "selected": int(np.count_nonzero(selected & m)), "size": int(m.sum())}
        for g, m in zip(pop.groups, pop.masks())
    }
    return _outcome(Doctrine.FORMAL, pop, selected, rationale)


# -- formal-plus -------------------------------------------------------------------


def pooled_tpr(pop: Population, p: float) -> float:
    """Share of all positives scoring above ``p``."""
    y = pop.require_labels().astype(bool)
    if not y.any():
        raise InfeasibleFitError("population has no positive labels; TPR undefined")
    return float(np.count_nonzero(y & (pop.score > p)) / np.count_nonzero(y))


def _fit_group(scores, labels, target):
    positives = np.sort(scores[labels == 1])
    n_pos = positives.size
    distinct = np.unique(scores)
    candidates = np.concatenate([[np.nextafter(distinct[0], -np.inf)], distinct])
    above = n_pos - np.searchsorted(positives, candidates, side="right")
    goal = target * n_pos
    # 'above' is non-increasing, so the feasible prefix ends at j
    j = int(np.flatnonzero(above >= goal - _COUNT_EPS)[-1])
    if abs(above[j] - goal) <= _COUNT_EPS:
        return GroupThreshold(float(candidates[j]), float(candidates[j]), 1.0)
    mixing = (goal - above[j + 1]) / (above[j] - above[j + 1])
    return GroupThreshold(float(candidates[j]), float(candidates[j + 1]), float(mixing))


def fit_formal_plus(pop: Population, target_rate=None, p=None) -> FormalPlus:
    """Fit per-group randomised thresholds giving every group the same expected TPR.

    For each group, the two adjacent thresholds on its empirical ROC that
    bracket ``target_rate`` are found; individuals strictly between them are
    selected with the probability that interpolates the two TPRs exactly. When
    a single threshold hits the target, the pair collapses. Among thresholds
    hitting the target the highest is used.

    ``target_rate`` defaults to the pooled TPR of the formal rule at ``p``.
    """
    y = pop.require_labels()
    if target_rate is None:
        if p is None:
            raise ConfigError("give target_rate or a formal threshold p to derive it from")
        target_rate = pooled_tpr(pop, p)
    thresholds = {}
    for g, m in zip(pop.groups, pop.masks()):
        if not np.any(y[m] == 1):
            raise InfeasibleFitError(f"group {g.label!r} has no positive labels; TPR target unreachable",
                                     group=g.label)
        if not (0.0 <= target_rate <= 1.0):
            raise InfeasibleFitError(
                f"target TPR {target_rate!r} outside group {g.label!r}'s reachable range [0, 1]",
                group=g.label)
        thresholds[g.label] = _fit_group(pop.score[m], y[m], target_rate)
    return FormalPlus(thresholds, float(target_rate))


def decide_formal_plus(pop: Population, params: FormalPlus, seed: int = 0) -> DecisionOutcome:
    """Apply fitted group thresholds; the in-between band is a seeded coin flip."""
    missing = [g.label for g in pop.groups if g.label not in params.thresholds]
    if missing:
        raise ConfigError(f"no formal-plus thresholds for group(s) {missing}")
    u = np.random.default_rng(seed).random(len(pop))
    selected = np.zeros(len(pop), dtype=bool)
    rationale = {}
    for g, m in zip(pop.groups, pop.masks()):
        t = params.thresholds[g.label]
        s = pop.score[m]
        band = (s > t.lower) & (s <= t.upper)
        selected[m] = (s > t.upper) | (band & (u[m] < t.mixing))
        rationale[g.label] = {
            "lower": t.lower, "upper": t.upper, "mixing": t.mixing,
            "target_tpr": params.target_rate, "in_band": int(band.sum()),
            "selected": int(selected[m].sum()), "size": int(m.sum()),
        }
    return _outcome(Doctrine.FORMAL_PLUS, pop, selected, rationale)


# -- luck-egalitarian ---------------------------------------------------------------


def group_quantile_thresholds(pop: Population, q: float) -> dict:
    return {g.label: EmpiricalQuantiles(pop.score[m])(q) for g, m in zip(pop.groups, pop.masks())}


def decide_luck_egalitarian(pop: Population, q: float) -> DecisionOutcome:
    """Select whoever scores at or above the ``q``-quantile of their own group."""
    _check_unit("quantile cut q", q)
    selected = np.zeros(len(pop), dtype=bool)
    rationale = {}
    for g, m in zip(pop.groups, pop.masks()):
        cut = EmpiricalQuantiles(pop.score[m])(q)
        selected[m] = pop.score[m] >= cut
        rationale[g.label] = {"quantile": float(q), "threshold": cut,
                              "selected": int(selected[m].sum()), "size": int(m.sum())}
    return _outcome(Doctrine.LUCK_EGALITARIAN, pop, selected, rationale)


# -- Rawlsian ------------------------------------------------------------------------


def reference_group(pop: Population, reference=None):
    """The benchmark group: ``reference`` by label, else the highest mean score."""
    if reference is not None:
        try:
            return pop.group_by_label(reference)
        except KeyError:
            raise ConfigError(f"unknown reference group {reference!r}") from None
    means = [pop.score[m].mean() for m in pop.masks()]
    return pop.groups[int(np.argmax(means))]


def score_deficits(pop: Population, reference=None):
    """Score minus the reference group's score at the same within-group rank."""
    ref = reference_group(pop, reference)
    ref_q = EmpiricalQuantiles(pop.score[pop.group == ref.id])
    deficits = np.zeros(len(pop))
    for g, m in zip(pop.groups, pop.masks()):
        if g == ref:
            continue
        ranks = EmpiricalQuantiles(pop.score[m]).cdf(pop.score[m])
        deficits[m] = pop.score[m] - ref_q(ranks)
    return deficits, ref


def decide_rawlsian(pop: Population, q: float, budget: float,
                    response: ResourceResponse | None = None, reference=None) -> DecisionOutcome:
    """Within-group quantile selection followed by water-filling of ``budget``.

    Selected individuals are scored by ``response(deficit + resources)``,
    their modelled prospect of success, where ``deficit`` compares their score
    with the reference group at the same within-group rank. Resources go to
    selected individuals only.
    """
    rule = Rawlsian(q, budget, response or ResourceResponse(), reference)
    base = decide_luck_egalitarian(pop, rule.q)
    selected = base.selected
    deficits, ref = score_deficits(pop, rule.reference)
    resources = np.zeros(len(pop))
    resources[selected] = water_fill(deficits[selected], rule.budget, rule.response)

    before = rule.response(deficits)
    after = rule.response(deficits + resources)
    rationale = {}
    for g, m in zip(pop.groups, pop.masks()):
        sm = m & selected
        entry = dict(base.rationale[g.label])
        entry.update({
            "reference_group": ref.label,
            "resources": float(resources[sm].sum()),
            "success_before_mean": float(before[sm].mean()) if sm.any() else None,
            "success_after_mean": float(after[sm].mean()) if sm.any() else None,
        })
        rationale[g.label] = entry
    if selected.any():
        rationale["_allocation"] = {
            "budget": rule.budget, "spent": float(resources.sum()),
            "response": str(rule.response),
            "spread_before": spread(before[selected]), "spread_after": spread(after[selected]),
        }
    return _outcome(Doctrine.RAWLSIAN, pop, selected, rationale, resources)


def success_probabilities(pop: Population, outcome: DecisionOutcome,
                          response: ResourceResponse, reference=None):
    """Modelled success probability of every individual under ``outcome``."""
    deficits, _ = score_deficits(pop, reference)
    return response(deficits + outcome.resources)


def decide(pop: Population, rule: DecisionRule, seed: int = 0) -> DecisionOutcome:
    """Dispatch on the rule type."""
    if isinstance(rule, Formal):
        return decide_formal(pop, rule.p)
    if isinstance(rule, FormalPlus):
        return decide_formal_plus(pop, rule, seed)
    if isinstance(rule, LuckEgalitarian):
        return decide_luck_egalitarian(pop, rule.q)
    if isinstance(rule, Rawlsian):
        return decide_rawlsian(pop, rule.q, rule.budget, rule.response, rule.reference)
    raise ConfigError(f"unknown decision rule {rule!r}")
