"""Multi-round contests where qualifications respond to privilege and to wins.

Every round: (1) each group's privilege boost is added to its members' scores
before the contest; (2) the selection rule picks roughly a ``capacity`` share
of the population; (3) winners gain ``win_boost`` and any Rawlsian resources
are added to the recipients' scores; (4) seeded Gaussian noise is added.
Dynamics are additive on scores.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .dataio import format_float, rows_to_csv
from .errors import ConfigError
from .population import Population
from .procedures import (
    DecisionRule, Formal, FormalPlus, LuckEgalitarian, Rawlsian, decide, fit_formal_plus, pooled_tpr,
)
from .synthetic import OutcomeModel
from .taxonomy import Doctrine

_CAPACITY_EPS = 1e-9


@dataclass(frozen=True)
class DynamicsSpec:
    """Parameters of :func:`simulate`.

    ``selection_rule`` fixes the doctrine (and, for the Rawlsian rule, the
    budget, response and reference group); its cut-off parameters are
    recomputed every round from ``capacity``. ``privilege_boost`` is keyed by
    group label, missing groups get 0. With ``outcome`` set, labels are redrawn
    every round from the current qualification; otherwise the initial labels
    are kept.
    """

    rounds: int
    selection_rule: DecisionRule
    capacity: float
    win_boost: float = 0.0
    privilege_boost: Mapping[str, float] = field(default_factory=dict)
    noise_scale: float = 0.0
    outcome: OutcomeModel | None = None

    def __post_init__(self):
        if isinstance(self.rounds, bool) or not isinstance(self.rounds, (int, np.integer)) or self.rounds < 1:
            raise ConfigError(f"rounds must be a positive integer, got {self.rounds!r}")
        if not (0.0 < self.capacity <= 1.0):
            raise ConfigError(f"capacity must lie in (0, 1], got {self.capacity!r}")
        if not (math.isfinite(self.win_boost) and self.win_boost >= 0):
            raise ConfigError(f"win_boost must be >= 0, got {self.win_boost!r}")
        if not (math.isfinite(self.noise_scale) and self.noise_scale >= 0):
            raise ConfigError(f"noise_scale must be >= 0, got {self.noise_scale!r}")
        for label, boost in self.privilege_boost.items():
            if not (math.isfinite(boost) and boost >= 0):
                raise ConfigError(f"privilege boost for {label!r} must be >= 0, got {boost!r}")


@dataclass(frozen=True)
class SimulationTrace:
    doctrine: Doctrine
    group_labels: tuple[str, ...]
    initial_means: np.ndarray        # (k,)
    group_means: np.ndarray          # (rounds, k), after each round's updates
    selection_rates: np.ndarray      # (rounds, k)
    score_gap: np.ndarray            # (rounds,), max - min of group means
    selection_gap: np.ndarray        # (rounds,)
    resources_spent: np.ndarray      # (rounds,)
    selected: np.ndarray             # (rounds, n) bool
    cumulative_wins: np.ndarray      # (rounds, n)
    final_scores: np.ndarray         # (n,)

    @property
    def rounds(self):
        return self.score_gap.shape[0]

    @property
    def initial_gap(self):
        return float(self.initial_means.max() - self.initial_means.min())

    @property
    def final_gap(self):
        return float(self.score_gap[-1])

    @property
    def next_round_gap(self):
        return float(self.score_gap[0])

    @property
    def cumulative_selection_gap(self):
        return float(self.selection_gap.sum())

    @property
    def area_under_gap(self):
        return float(self.score_gap.sum())

    def summary(self):
        return {
            "doctrine": self.doctrine.value,
            "initial_gap": self.initial_gap,
            "next_round_gap": self.next_round_gap,
            "final_gap": self.final_gap,
            "cumulative_selection_gap": self.cumulative_selection_gap,
            "area_under_gap": self.area_under_gap,
            "resources_spent": float(self.resources_spent.sum()),
        }

    def tidy_rows(self):
        rows = []
        for j, label in enumerate(self.group_labels):
            rows.append((0, label, "mean_score", format_float(self.initial_means[j])))
        rows.append((0, "all", "score_gap", format_float(self.initial_gap)))
        for r in range(self.rounds):
            for j, label in enumerate(self.group_labels):
                rows.append((r + 1, label, "mean_score", format_float(self.group_means[r, j])))
                rows.append((r + 1, label, "selection_rate", format_float(self.selection_rates[r, j])))
            rows.append((r + 1, "all", "score_gap", format_float(self.score_gap[r])))
            rows.append((r + 1, "all", "selection_rate_gap", format_float(self.selection_gap[r])))
            rows.append((r + 1, "all", "resources_spent", format_float(self.resources_spent[r])))
        return rows

    def to_tidy_csv(self):
        return rows_to_csv(["round", "group", "metric", "value"], self.tidy_rows())


def slots(capacity, n):
    k = int(math.floor(capacity * n + _CAPACITY_EPS))
    if k < 1:
        raise ConfigError(f"capacity {capacity!r} leaves no slot for a population of {n}")
    return k


def capacity_threshold(scores, capacity):
    """Formal cut-off selecting (up to ties) the top ``capacity`` share."""
    k = slots(capacity, scores.size)
    desc = np.sort(scores)[::-1]
    if k >= scores.size:
        return float(np.nextafter(desc[-1], -np.inf))
    return float(desc[k])


def rule_at_capacity(template: DecisionRule, pop: Population, capacity: float) -> DecisionRule:
    """Concrete rule of ``template``'s doctrine sized to ``capacity``."""
    if isinstance(template, Formal):
        return Formal(capacity_threshold(pop.score, capacity))
    if isinstance(template, FormalPlus):
        p = capacity_threshold(pop.score, capacity)
        return fit_formal_plus(pop, pooled_tpr(pop, p))
    if isinstance(template, LuckEgalitarian):
        return LuckEgalitarian(1.0 - capacity)
    if isinstance(template, Rawlsian):
        return replace(template, q=1.0 - capacity)
    raise ConfigError(f"unknown decision rule {template!r}")


def simulate(pop0: Population, spec: DynamicsSpec, seed: int = 0) -> SimulationTrace:
    """Run ``spec.rounds`` contests starting from ``pop0``; deterministic per seed.

    Label draws, formal-plus coin flips and score noise come from separate
    child streams of ``seed``, so two rules simulated with the same seed see
    the same noise.
    """
    n = len(pop0)
    slots(spec.capacity, n)
    unknown = set(spec.privilege_boost) - {g.label for g in pop0.groups}
    if unknown:
        raise ConfigError(f"privilege boost for unknown group(s) {sorted(unknown)}")
    if spec.outcome is None and not pop0.is_labeled and isinstance(spec.selection_rule, FormalPlus):
        raise ConfigError("formal-plus selection needs labels or an outcome model")

    label_rng, decide_rng, noise_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)
    )
    masks = pop0.masks()
    k = len(pop0.groups)
    boost = np.zeros(n)
    for g, m in zip(pop0.groups, masks):
        boost[m] = spec.privilege_boost.get(g.label, 0.0)
    # talent moves with the score; the gap between them (test bias) is fixed
    offset = np.where(np.isfinite(pop0.talent), pop0.score - pop0.talent, 0.0)

    score = pop0.score.copy()
    labels = pop0.label
    wins = np.zeros(n, dtype=np.int64)
    means = np.empty((spec.rounds, k))
    rates = np.empty((spec.rounds, k))
    spent = np.empty(spec.rounds)
    selected_all = np.empty((spec.rounds, n), dtype=bool)
    wins_all = np.empty((spec.rounds, n), dtype=np.int64)
    initial_means = np.array([score[m].mean() for m in masks])

    for r in range(spec.rounds):
        score = score + boost
        if spec.outcome is not None:
            labels = spec.outcome.sample(score - offset, score, label_rng)
        pop_r = pop0.replace(score=score, label=labels, resources=np.zeros(n))
        rule = rule_at_capacity(spec.selection_rule, pop_r, spec.capacity)
        outcome = decide(pop_r, rule, seed=int(decide_rng.integers(2**63)))
        sel = outcome.selected
        score = score + spec.win_boost * sel + outcome.resources
        noise = noise_rng.standard_normal(n)
        if spec.noise_scale > 0:
            score = score + spec.noise_scale * noise
        wins = wins + sel
        means[r] = [score[m].mean() for m in masks]
        rates[r] = [sel[m].mean() for m in masks]
        spent[r] = outcome.resources.sum()
        selected_all[r] = sel
        wins_all[r] = wins

    return SimulationTrace(
        doctrine=spec.selection_rule.doctrine,
        group_labels=tuple(g.label for g in pop0.groups),
        initial_means=initial_means,
        group_means=means,
        selection_rates=rates,
        score_gap=means.max(axis=1) - means.min(axis=1),
        selection_gap=rates.max(axis=1) - rates.min(axis=1),
        resources_spent=spent,
        selected=selected_all,
        cumulative_wins=wins_all,
        final_scores=score,
    )


@dataclass(frozen=True)
class Comparison:
    traces: tuple[SimulationTrace, ...]

    @property
    def rows(self):
        return [t.summary() for t in self.traces]

    def final_gaps(self):
        return {t.doctrine: t.final_gap for t in self.traces}

    def to_csv(self):
        header = ["doctrine", "initial_gap", "next_round_gap", "final_gap",
                  "cumulative_selection_gap", "area_under_gap", "resources_spent"]
        return rows_to_csv(header, (
            [row["doctrine"]] + [format_float(row[h]) for h in header[1:]] for row in self.rows
        ))


def compare_doctrines(pop0: Population, spec: DynamicsSpec, rules: Sequence[DecisionRule],
                      seed: int = 0) -> Comparison:
    """Simulate each rule from the same population and seed.

    ``spec.selection_rule`` is replaced by each entry of ``rules`` in turn.
    """
    return Comparison(tuple(simulate(pop0, replace(spec, selection_rule=rule), seed) for rule in rules))
