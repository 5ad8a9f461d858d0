"""Synthetic scenario specs, presets and the seeded population generator.

Every group draws a latent talent from a normal distribution truncated at
``TRUNCATION`` scale units either side of its location (a light-tailed,
bounded location-scale family). The observed score is ``talent + bias``, and
labels, when an outcome model is configured, are Bernoulli draws through a
monotone link of talent (or of the score).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
import yaml
from scipy.special import ndtr, ndtri

from .errors import ConfigError
from .population import MISSING_LABEL, Population

TRUNCATION = 2.0

_LINK_DEFAULTS = {
    "linear": {"lo": 0.0, "hi": 1.0, "x0": 0.0, "x1": 1.0},
    "logistic": {"slope": 10.0, "midpoint": 0.5},
}


@dataclass(frozen=True)
class OutcomeModel:
    """Monotone link from talent (or score) to ``P(label = 1)``.

    ``linear`` rises from ``lo`` at ``x0`` to ``hi`` at ``x1`` and is flat
    outside that interval; ``logistic`` is ``1 / (1 + exp(-slope (x - midpoint)))``.
    """

    kind: str = "linear"
    params: Mapping[str, float] = field(default_factory=dict)
    source: str = "talent"

    def __post_init__(self):
        if self.kind not in _LINK_DEFAULTS:
            raise ConfigError(f"unknown outcome kind {self.kind!r}; expected one of {sorted(_LINK_DEFAULTS)}")
        if self.source not in ("talent", "score"):
            raise ConfigError(f"outcome source must be 'talent' or 'score', got {self.source!r}")
        unknown = set(self.params) - set(_LINK_DEFAULTS[self.kind])
        if unknown:
            raise ConfigError(f"unknown {self.kind} outcome params: {sorted(unknown)}")
        p = self.resolved
        if self.kind == "linear":
            if not (0.0 <= p["lo"] <= p["hi"] <= 1.0):
                raise ConfigError("linear outcome needs 0 <= lo <= hi <= 1")
            if not p["x1"] > p["x0"]:
                raise ConfigError("linear outcome needs x1 > x0")
        elif not p["slope"] > 0:
            raise ConfigError("logistic outcome needs slope > 0")

    @property
    def resolved(self):
        return {**_LINK_DEFAULTS[self.kind], **{k: float(v) for k, v in self.params.items()}}

    def probability(self, x):
        x = np.asarray(x, dtype=float)
        p = self.resolved
        if self.kind == "linear":
            frac = np.clip((x - p["x0"]) / (p["x1"] - p["x0"]), 0.0, 1.0)
            return p["lo"] + (p["hi"] - p["lo"]) * frac
        return 1.0 / (1.0 + np.exp(-p["slope"] * (x - p["midpoint"])))

    def sample(self, talent, score, rng):
        x = talent if self.source == "talent" else score
        return (rng.random(len(x)) < self.probability(x)).astype(np.int8)


@dataclass(frozen=True)
class GroupSpec:
    label: str
    size: int
    loc: float
    scale: float
    bias: float = 0.0

    def __post_init__(self):
        if not isinstance(self.size, (int, np.integer)) or isinstance(self.size, bool) or self.size <= 0:
            raise ConfigError(f"group {self.label!r}: size must be a positive integer, got {self.size!r}")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ConfigError(f"group {self.label!r}: scale must be > 0, got {self.scale!r}")
        if not (math.isfinite(self.loc) and math.isfinite(self.bias)):
            raise ConfigError(f"group {self.label!r}: loc and bias must be finite")

    @property
    def support(self):
        """Closed interval holding every score this group can produce."""
        half = TRUNCATION * self.scale
        return self.loc + self.bias - half, self.loc + self.bias + half


@dataclass(frozen=True)
class ScenarioSpec:
    groups: tuple[GroupSpec, ...]
    outcome: OutcomeModel | None = None
    name: str = "custom"
    # suggested cut-offs shipped with presets; informational for the CLI
    formal_threshold: float | None = None
    audit_threshold: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        if not self.groups:
            raise ConfigError("scenario needs at least one group")
        labels = [g.label for g in self.groups]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"group labels must be unique, got {labels}")

    def resized(self, size):
        """Same scenario with every group resized to ``size``."""
        return replace(self, groups=tuple(replace(g, size=int(size)) for g in self.groups))


def _truncated_normal(rng, n, loc, scale):
    lo, hi = ndtr(-TRUNCATION), ndtr(TRUNCATION)
    return loc + scale * ndtri(lo + (hi - lo) * rng.random(n))


def generate_synthetic(spec: ScenarioSpec, seed: int) -> Population:
    """Draw a population from ``spec``; bit-for-bit reproducible per seed.

    Each group gets its own child stream of ``SeedSequence(seed)``, so resizing
    one group leaves the others' draws unchanged.
    """
    streams = np.random.SeedSequence(seed).spawn(len(spec.groups))
    ids, scores, labels, talents = [], [], [], []
    for gid, (g, stream) in enumerate(zip(spec.groups, streams)):
        rng = np.random.default_rng(stream)
        talent = _truncated_normal(rng, g.size, g.loc, g.scale)
        score = talent + g.bias
        if spec.outcome is None:
            label = np.full(g.size, MISSING_LABEL, dtype=np.int8)
        else:
            label = spec.outcome.sample(talent, score, rng)
        ids.append(np.full(g.size, gid, dtype=np.int64))
        scores.append(score)
        labels.append(label)
        talents.append(talent)
    return Population(
        [g.label for g in spec.groups],
        np.concatenate(ids),
        np.concatenate(scores),
        label=np.concatenate(labels),
        talent=np.concatenate(talents),
    )


# -- presets ------------------------------------------------------------------

_PRESETS = {
    # Group A sits lower on the score scale; success probability climbs over
    # [0.15, 0.30] and is flat at 0.9 above it, so the score is equally
    # calibrated for both groups while base rates differ (~0.75 vs ~0.90).
    # A's support tops out at 0.52, so a cut at 0.55 admits nobody from A.
    "admissions": {
        "name": "admissions",
        "groups": [
            {"label": "A", "size": 1000, "loc": 0.32, "scale": 0.10},
            {"label": "B", "size": 1000, "loc": 0.60, "scale": 0.10},
        ],
        "outcome": {"kind": "linear", "source": "talent",
                    "params": {"lo": 0.05, "hi": 0.9, "x0": 0.15, "x1": 0.30}},
        "formal_threshold": 0.55,
        "audit_threshold": 0.45,
    },
    # identical groups: the equal-base-rate control
    "equal": {
        "name": "equal",
        "groups": [
            {"label": "A", "size": 1000, "loc": 0.50, "scale": 0.10},
            {"label": "B", "size": 1000, "loc": 0.50, "scale": 0.10},
        ],
        "outcome": {"kind": "linear", "source": "talent",
                    "params": {"lo": 0.05, "hi": 0.95, "x0": 0.30, "x1": 0.70}},
        "formal_threshold": 0.5,
        "audit_threshold": 0.5,
    },
    # label ~ Bernoulli(score): calibrated on the probability scale. Supports
    # [0.25, 0.65] and [0.35, 0.75] sit on the edges of ten 0.05-wide bins
    # over [0.25, 0.75], so no bin is cut by a truncation point.
    "calibrated": {
        "name": "calibrated",
        "groups": [
            {"label": "A", "size": 1000, "loc": 0.45, "scale": 0.10},
            {"label": "B", "size": 1000, "loc": 0.55, "scale": 0.10},
        ],
        "outcome": {"kind": "linear", "source": "score",
                    "params": {"lo": 0.0, "hi": 1.0, "x0": 0.0, "x1": 1.0}},
        "formal_threshold": 0.5,
        "audit_threshold": 0.5,
    },
}

PRESET_NAMES = tuple(_PRESETS)


def preset(name: str, size: int | None = None) -> ScenarioSpec:
    """Embedded scenario ``name``, optionally with every group resized."""
    try:
        raw = _PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}") from None
    spec = scenario_from_mapping(raw)
    return spec if size is None else spec.resized(size)


# -- config files ---------------------------------------------------------------

_TOP_KEYS = {"preset", "name", "groups", "outcome", "formal_threshold", "audit_threshold"}


def _num(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    return float(value)


def scenario_from_mapping(data: Mapping, lines: Mapping | None = None) -> ScenarioSpec:
    """Validate a nested mapping into a :class:`ScenarioSpec`.

    ``lines`` maps key paths (tuples) to 1-based source lines and is used to
    prefix error messages when the mapping came from a file.
    """
    lines = lines or {}

    def fail(path, msg):
        line = None
        for k in range(len(path), -1, -1):
            line = lines.get(tuple(path[:k]))
            if line is not None:
                break
        prefix = f"line {line}: " if line is not None else ""
        raise ConfigError(prefix + msg)

    if not isinstance(data, Mapping):
        fail((), "scenario file must contain a mapping at the top level")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        fail((sorted(unknown)[0],), f"unknown scenario keys: {sorted(unknown)}")

    base = {}
    if "preset" in data:
        if data["preset"] not in _PRESETS:
            fail(("preset",), f"unknown preset {data['preset']!r}")
        base = dict(_PRESETS[data["preset"]])
    merged = {**base, **{k: v for k, v in data.items() if k != "preset"}}

    raw_groups = merged.get("groups")
    if not isinstance(raw_groups, list) or not raw_groups:
        fail(("groups",), "groups must be a non-empty list")
    groups = []
    for i, g in enumerate(raw_groups):
        path = ("groups", i)
        if not isinstance(g, Mapping):
            fail(path, f"groups[{i}] must be a mapping")
        missing = {"label", "size", "loc", "scale"} - set(g)
        if missing:
            fail(path, f"groups[{i}] missing keys: {sorted(missing)}")
        extra = set(g) - {"label", "size", "loc", "scale", "bias"}
        if extra:
            fail(path, f"groups[{i}] unknown keys: {sorted(extra)}")
        size = g["size"]
        if isinstance(size, bool) or not isinstance(size, int):
            fail(path + ("size",), f"groups[{i}].size must be an integer, got {size!r}")
        try:
            groups.append(GroupSpec(
                label=str(g["label"]),
                size=size,
                loc=_num(g["loc"], f"groups[{i}].loc"),
                scale=_num(g["scale"], f"groups[{i}].scale"),
                bias=_num(g.get("bias", 0.0), f"groups[{i}].bias"),
            ))
        except ConfigError as exc:
            fail(path, str(exc))

    outcome = None
    raw_out = merged.get("outcome")
    if raw_out is not None:
        if not isinstance(raw_out, Mapping):
            fail(("outcome",), "outcome must be a mapping or null")
        if raw_out.get("kind", "linear") != "none":
            extra = set(raw_out) - {"kind", "params", "source"}
            if extra:
                fail(("outcome",), f"outcome unknown keys: {sorted(extra)}")
            params = raw_out.get("params") or {}
            if not isinstance(params, Mapping):
                fail(("outcome", "params"), "outcome.params must be a mapping")
            try:
                outcome = OutcomeModel(
                    kind=raw_out.get("kind", "linear"),
                    params={k: _num(v, f"outcome.params.{k}") for k, v in params.items()},
                    source=raw_out.get("source", "talent"),
                )
            except ConfigError as exc:
                fail(("outcome",), str(exc))

    thresholds = {}
    for key in ("formal_threshold", "audit_threshold"):
        if merged.get(key) is not None:
            try:
                thresholds[key] = _num(merged[key], key)
            except ConfigError as exc:
                fail((key,), str(exc))
    try:
        return ScenarioSpec(tuple(groups), outcome, name=str(merged.get("name", "custom")), **thresholds)
    except ConfigError as exc:
        fail(("groups",), str(exc))


def _line_index(node, path=(), out=None):
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            _line_index(value, path + (key.value,), out)
            out[path + (key.value,)] = key.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _line_index(item, path + (i,), out)
    return out


def load_scenario(path) -> ScenarioSpec:
    """Read a YAML (or JSON) scenario file; errors carry source line numbers."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None) or getattr(exc, "context_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{where}malformed scenario file: {problem}") from None
    lines = _line_index(node) if node is not None else {}
    return scenario_from_mapping(data, lines)
