"""Core population data model: groups, individuals and per-group summaries.

A :class:`Population` is stored column-wise (numpy arrays) so that audits over
10^5-sized groups stay vectorised; :attr:`Population.individuals` offers the
row view when it is needed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, LabelsRequiredError

#: Encoding of a missing true label inside :attr:`Population.labels`.
MISSING_LABEL = -1

# absorbs float error in q * n before the ceiling; exact for n < 1e6
_QUANTILE_EPS = 1e-9


@dataclass(frozen=True)
class GroupId:
    id: int
    label: str


@dataclass(frozen=True)
class Individual:
    group: GroupId
    score: float
    label: int | None = None
    talent: float | None = None
    resources: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise DataError(f"score must be finite, got {self.score!r}")
        if self.label is not None and self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")
        if not (self.resources >= 0 and math.isfinite(self.resources)):
            raise DataError(f"resources must be finite and >= 0, got {self.resources!r}")


def _frozen(arr):
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


class EmpiricalQuantiles:
    """Left-continuous inverse of a sample's empirical CDF.

    ``Q(q)`` is the smallest sample value whose empirical CDF is at least ``q``;
    ``Q(0)`` is taken to be the sample minimum.
    """

    def __init__(self, values):
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            raise ValueError("cannot build quantiles of an empty sample")
        self.sorted = _frozen(np.sort(values))

    @property
    def n(self):
        return self.sorted.size

    def __call__(self, q):
        q_arr = np.asarray(q, dtype=float)
        if np.any((q_arr < 0) | (q_arr > 1)) or np.any(np.isnan(q_arr)):
            raise ValueError(f"quantile level must lie in [0, 1], got {q!r}")
        k = np.ceil(q_arr * self.n - _QUANTILE_EPS).astype(np.int64)
        idx = np.clip(k, 1, self.n) - 1
        out = self.sorted[idx]
        return float(out) if out.ndim == 0 else out

    def cdf(self, x):
        """Fraction of the sample that is ``<= x``."""
        x_arr = np.asarray(x, dtype=float)
        out = np.searchsorted(self.sorted, x_arr, side="right") / self.n
        return float(out) if out.ndim == 0 else out

    def __eq__(self, other):
        if not isinstance(other, EmpiricalQuantiles):
            return NotImplemented
        return np.array_equal(self.sorted, other.sorted)

    def __repr__(self):
        return f"EmpiricalQuantiles(n={self.n}, min={self.sorted[0]:g}, max={self.sorted[-1]:g})"


class Population:
    """An ordered collection of scored individuals partitioned into groups.

    Parameters
    ----------
    groups : sequence of str or GroupId
        Group labels in id order; ``groups[i]`` is the group with id ``i``.
    group : array-like of int
        Group id of every individual.
    score : array-like of float
    label : array-like of int, optional
        True outcome per individual, ``-1`` (:data:`MISSING_LABEL`) when unknown.
    talent : array-like of float, optional
        Latent talent, ``nan`` when unknown. Only synthetic scenarios fill it.
    resources : array-like of float, optional
        Auxiliary allocation per individual, default all zero.
    """

    def __init__(self, groups, group, score, label=None, talent=None, resources=None):
        group = np.asarray(group)
        score = np.asarray(score, dtype=float)
        n = score.shape[0]
        if group.shape != (n,) or score.ndim != 1:
            raise DataError("group and score columns must be 1-d and of equal length")
        if n == 0:
            raise DataError("population must contain at least one individual")
        if not np.issubdtype(group.dtype, np.integer):
            raise DataError("group ids must be integers")

        self.groups = tuple(
            g if isinstance(g, GroupId) else GroupId(i, str(g)) for i, g in enumerate(groups)
        )
        labels_seen = [g.label for g in self.groups]
        if len(set(labels_seen)) != len(labels_seen):
            raise DataError(f"group labels must be unique, got {labels_seen}")
        if [g.id for g in self.groups] != list(range(len(self.groups))):
            raise DataError("group ids must be dense 0..k-1")

        if np.any((group < 0) | (group >= len(self.groups))):
            raise DataError("individual assigned to an undeclared group")
        counts = np.bincount(group, minlength=len(self.groups))
        empty = [self.groups[i].label for i in np.flatnonzero(counts == 0)]
        if empty:
            raise DataError(f"declared groups without members: {empty}")

        bad = np.flatnonzero(~np.isfinite(score))
        if bad.size:
            raise DataError("score must be finite", row=int(bad[0]) + 1)

        if label is None:
            label = np.full(n, MISSING_LABEL, dtype=np.int8)
        else:
            label = np.asarray(label)
            if label.shape != (n,):
                raise DataError("label column has the wrong length")
            bad = np.flatnonzero(~np.isin(label, (MISSING_LABEL, 0, 1)))
            if bad.size:
                raise DataError(f"label must be 0 or 1, got {label[bad[0]]!r}", row=int(bad[0]) + 1)
            label = label.astype(np.int8)

        if talent is None:
            talent = np.full(n, np.nan)
        else:
            talent = np.asarray(talent, dtype=float)
            if talent.shape != (n,):
                raise DataError("talent column has the wrong length")

        if resources is None:
            resources = np.zeros(n)
        else:
            resources = np.asarray(resources, dtype=float)
            if resources.shape != (n,):
                raise DataError("resources column has the wrong length")
            bad = np.flatnonzero(~(np.isfinite(resources) & (resources >= 0)))
            if bad.size:
                raise DataError("resources must be finite and >= 0", row=int(bad[0]) + 1)

        self.group = _frozen(group.astype(np.int64))
        self.score = _frozen(score)
        self.label = _frozen(label)
        self.talent = _frozen(talent)
        self.resources = _frozen(resources)

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_individuals(cls, individuals: Iterable[Individual], groups: Sequence[GroupId] | None = None):
        individuals = list(individuals)
        if groups is None:
            seen = {}
            for ind in individuals:
                seen.setdefault(ind.group.id, ind.group)
            groups = [seen[i] for i in sorted(seen)]
        return cls(
            groups,
            [ind.group.id for ind in individuals],
            [ind.score for ind in individuals],
            label=[MISSING_LABEL if ind.label is None else ind.label for ind in individuals],
            talent=[np.nan if ind.talent is None else ind.talent for ind in individuals],
            resources=[ind.resources for ind in individuals],
        )

    @classmethod
    def from_labels(cls, group_labels: Sequence[str], score, label=None, **kwargs):
        """Build from per-row group *labels*; ids follow first appearance."""
        order = {}
        ids = [order.setdefault(str(g), len(order)) for g in group_labels]
        return cls(list(order), np.asarray(ids, dtype=np.int64), score, label=label, **kwargs)

    def replace(self, groups=None, **columns):
        """Copy with some columns swapped out (``score``, ``label``, ...)."""
        kw = dict(
            group=self.group, score=self.score, label=self.label,
            talent=self.talent, resources=self.resources,
        )
        kw.update(columns)
        return Population(self.groups if groups is None else groups, **kw)

    def blind(self):
        """Population with the group column dropped (everyone in one group)."""
        return self.replace(groups=[GroupId(0, "all")], group=np.zeros(len(self), dtype=np.int64))

    def take(self, index):
        """Reorder / subset rows; groups left without members are an error."""
        index = np.asarray(index)
        return Population(
            self.groups, self.group[index], self.score[index], label=self.label[index],
            talent=self.talent[index], resources=self.resources[index],
        )

    # -- views ----------------------------------------------------------------

    def __len__(self):
        return self.score.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Population):
            return NotImplemented
        return (
            self.groups == other.groups
            and np.array_equal(self.group, other.group)
            and np.array_equal(self.score, other.score)
            and np.array_equal(self.label, other.label)
            and np.array_equal(self.talent, other.talent, equal_nan=True)
            and np.array_equal(self.resources, other.resources)
        )

    __hash__ = None

    def __repr__(self):
        sizes = ", ".join(f"{g.label}={int(m.sum())}" for g, m in zip(self.groups, self.masks()))
        return f"Population(n={len(self)}, groups=[{sizes}])"

    @cached_property
    def individuals(self):
        return tuple(
            Individual(
                group=self.groups[g],
                score=float(s),
                label=None if y == MISSING_LABEL else int(y),
                talent=None if math.isnan(t) else float(t),
                resources=float(r),
            )
            for g, s, y, t, r in zip(self.group, self.score, self.label, self.talent, self.resources)
        )

    def group_by_label(self, label):
        for g in self.groups:
            if g.label == label:
                return g
        raise KeyError(label)

    def masks(self):
        """Boolean membership mask for every group, in id order."""
        return [self.group == g.id for g in self.groups]

    @property
    def is_labeled(self):
        return bool(np.all(self.label != MISSING_LABEL))

    def require_labels(self):
        """Return the label column as a 0/1 array, or raise if any is missing."""
        if not self.is_labeled:
            raise LabelsRequiredError()
        return self.label.astype(np.int64)

    @property
    def has_talent(self):
        return bool(np.all(np.isfinite(self.talent)))


@dataclass(frozen=True)
class GroupSummary:
    group: GroupId
    size: int
    base_rate: float | None
    score_quantiles: EmpiricalQuantiles


def summarize(pop: Population) -> list[GroupSummary]:
    """Per-group size, base rate and empirical score quantile function.

    The base rate is only reported for groups whose members are all labelled;
    a group mixing labelled and unlabelled members is rejected.
    """
    out = []
    for g, mask in zip(pop.groups, pop.masks()):
        labels = pop.label[mask]
        missing = labels == MISSING_LABEL
        if missing.all():
            base_rate = None
        elif missing.any():
            raise DataError(f"partial labels in group {g.label!r}")
        else:
            base_rate = int(np.count_nonzero(labels == 1)) / labels.size
        out.append(GroupSummary(g, int(mask.sum()), base_rate, EmpiricalQuantiles(pop.score[mask])))
    return out
