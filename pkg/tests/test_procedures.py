import itertools
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqopp.errors import ConfigError, InfeasibleFitError
from eqopp.metrics import confusion_stats
from eqopp.population import Population
from eqopp.procedures import (
    Formal, FormalPlus, GroupThreshold, LuckEgalitarian, Rawlsian, ResourceResponse, decide,
    decide_formal, decide_formal_plus, decide_luck_egalitarian, decide_rawlsian, fit_formal_plus,
    pooled_tpr, score_deficits,
)
from eqopp.synthetic import generate_synthetic, preset
from eqopp.taxonomy import Doctrine


# -- formal ----------------------------------------------------------------------------


def test_formal_hand_enumeration(hand_pop):
    out = decide_formal(hand_pop, 0.5)
    # scores 0.9, 0.7 (A) and 0.8, 0.6 (B) clear 0.5
    assert out.decisions.tolist() == [1, 1, 0, 0, 1, 1, 0, 0]
    assert out.doctrine is Doctrine.FORMAL
    assert not out.resources.any()


def test_formal_below_minimum_selects_everyone(hand_pop):
    assert decide_formal(hand_pop, 0.0).decisions.all()


def test_formal_prohibitive_threshold_eliminates_group_a():
    spec = preset("admissions")
    pop = generate_synthetic(spec, seed=0)
    out = decide_formal(pop, spec.formal_threshold)
    assert out.rationale["A"]["selected"] == 0
    assert out.rationale["B"]["selected"] == 709  # counting oracle


def test_formal_is_group_blind(hand_pop):
    swapped = hand_pop.replace(group=1 - hand_pop.group)
    assert np.array_equal(decide_formal(hand_pop, 0.45).decisions, decide_formal(swapped, 0.45).decisions)


def test_formal_rejects_non_finite(hand_pop):
    with pytest.raises(ConfigError):
        Formal(float("nan"))


# -- formal-plus ----------------------------------------------------------------------------


def ten_point_population():
    # A: four positives, B: two positives
    return Population.from_labels(
        list("AAAAABBBBB"),
        [0.9, 0.8, 0.6, 0.5, 0.3, 0.7, 0.4, 0.35, 0.2, 0.1],
        label=[1, 1, 0, 1, 1, 1, 0, 1, 0, 0],
    )


def exhaustive_expected_tpr(pop, params):
    """Expected TPR per group by enumerating every coin-flip outcome in the band."""
    out = {}
    for g, m in zip(pop.groups, pop.masks()):
        t = params.thresholds[g.label]
        mix = Fraction(t.mixing).limit_denominator(10_000)
        s, y = pop.score[m], pop.label[m]
        sure = [i for i in range(len(s)) if s[i] > t.upper]
        band = [i for i in range(len(s)) if t.lower < s[i] <= t.upper]
        positives = int(y.sum())
        expected = Fraction(0)
        for flips in itertools.product((0, 1), repeat=len(band)):
            prob = Fraction(1)
            for f in flips:
                prob *= mix if f else 1 - mix
            chosen = sure + [i for i, f in zip(band, flips) if f]
            expected += prob * Fraction(sum(int(y[i]) for i in chosen), positives)
        out[g.label] = expected
    return out


def test_formal_plus_exact_expected_tpr_on_ten_points():
    pop = ten_point_population()
    params = fit_formal_plus(pop, target_rate=0.75)
    assert params.thresholds["A"] == GroupThreshold(0.3, 0.3, 1.0)
    assert params.thresholds["B"] == GroupThreshold(0.2, 0.35, 0.5)
    assert exhaustive_expected_tpr(pop, params) == {"A": Fraction(3, 4), "B": Fraction(3, 4)}


def test_formal_plus_identical_groups_share_thresholds():
    scores = [0.9, 0.7, 0.5, 0.3, 0.1]
    labels = [1, 1, 0, 1, 0]
    pop = Population.from_labels(list("AAAAABBBBB"), scores * 2, label=labels * 2)
    params = fit_formal_plus(pop, p=0.4)
    a, b = params.thresholds["A"], params.thresholds["B"]
    assert a == b
    assert a.mixing in (0.0, 1.0)


def test_formal_plus_full_recall_thresholds_below_min_positive():
    pop = ten_point_population()
    params = fit_formal_plus(pop, target_rate=1.0)
    for g, m in zip(pop.groups, pop.masks()):
        t = params.thresholds[g.label]
        assert t.upper < pop.score[m][pop.label[m] == 1].min()
        assert t.mixing == 1.0


def test_formal_plus_default_target_is_pooled_formal_tpr():
    pop = ten_point_population()
    params = fit_formal_plus(pop, p=0.55)
    assert params.target_rate == pooled_tpr(pop, 0.55) == 3 / 6


def test_formal_plus_unreachable_target_names_group():
    pop = ten_point_population()
    with pytest.raises(InfeasibleFitError, match="'A'") as info:
        fit_formal_plus(pop, target_rate=1.2)
    assert info.value.group == "A"
    no_pos = Population.from_labels(list("AABB"), [0.1, 0.2, 0.3, 0.4], label=[1, 0, 0, 0])
    with pytest.raises(InfeasibleFitError, match="'B'"):
        fit_formal_plus(no_pos, target_rate=0.5)


def test_formal_plus_missing_group_rejected():
    pop = ten_point_population()
    params = FormalPlus({"A": GroupThreshold(0.1, 0.2, 0.5)}, 0.5)
    with pytest.raises(ConfigError, match="B"):
        decide_formal_plus(pop, params)


def test_formal_plus_seeded_determinism():
    pop = generate_synthetic(preset("admissions"), seed=1)
    params = fit_formal_plus(pop, p=0.45)
    a = decide_formal_plus(pop, params, seed=3)
    b = decide_formal_plus(pop, params, seed=3)
    assert np.array_equal(a.decisions, b.decisions)


def test_unit_mixing_equals_lower_threshold():
    pop = ten_point_population()
    params = FormalPlus({"A": GroupThreshold(0.55, 0.85, 1.0), "B": GroupThreshold(0.15, 0.5, 1.0)}, 0.5)
    out = decide_formal_plus(pop, params, seed=0)
    expected = np.where(pop.group == 0, pop.score > 0.55, pop.score > 0.15)
    assert np.array_equal(out.selected, expected)


def test_shared_degenerate_pair_reduces_to_formal(hand_pop):
    t = GroupThreshold(0.5, 0.5, 0.0)
    out = decide_formal_plus(hand_pop, FormalPlus({"A": t, "B": t}, 0.5), seed=9)
    assert np.array_equal(out.decisions, decide_formal(hand_pop, 0.5).decisions)


def test_group_threshold_validation():
    with pytest.raises(ConfigError):
        GroupThreshold(0.5, 0.4, 0.5)
    with pytest.raises(ConfigError):
        GroupThreshold(0.1, 0.4, 1.5)


def test_formal_plus_admissions_tpr_gap_monte_carlo():
    pop = generate_synthetic(preset("admissions", size=100_000), seed=2)
    params = fit_formal_plus(pop, p=preset("admissions").formal_threshold)
    stats = confusion_stats(pop, decide_formal_plus(pop, params, seed=0).decisions)
    assert abs(stats[0].tpr - stats[1].tpr) < 0.01


# -- luck-egalitarian ---------------------------------------------------------------------


def test_luck_q_zero_selects_everyone(hand_pop):
    assert decide_luck_egalitarian(hand_pop, 0.0).decisions.all()


def test_luck_identical_groups_equals_global_threshold():
    scores = [0.15, 0.3, 0.45, 0.6, 0.75]
    pop = Population.from_labels(list("AAAAABBBBB"), scores * 2)
    out = decide_luck_egalitarian(pop, 0.6)
    cut = out.rationale["A"]["threshold"]
    assert cut == out.rationale["B"]["threshold"] == 0.45
    assert np.array_equal(out.decisions, decide_formal(pop, np.nextafter(cut, -np.inf)).decisions)


def test_luck_admissions_eightieth_percentile():
    pop = generate_synthetic(preset("admissions"), seed=0)
    out = decide_luck_egalitarian(pop, 0.8)
    # counting oracle: 201 of 1000 in each group
    assert [out.rationale[g]["selected"] for g in "AB"] == [201, 201]
    assert all(abs(out.rationale[g]["selected"] - 200) <= 1 for g in "AB")


def test_luck_ties_at_cut_all_included():
    pop = Population.from_labels(list("AAAA"), [0.1, 0.5, 0.5, 0.9])
    assert decide_luck_egalitarian(pop, 0.5).decisions.tolist() == [0, 1, 1, 1]


@st.composite
def grouped_integer_scores(draw):
    n = draw(st.integers(2, 40))
    groups = draw(st.lists(st.integers(0, 2), min_size=n, max_size=n))
    groups[:2] = [0, 1]
    k = max(groups) + 1
    scores = draw(st.lists(st.integers(-50, 50), min_size=n, max_size=n))
    return Population([f"g{i}" for i in range(k)], groups, np.array(scores, dtype=float) / 10)


TRANSFORMS = [
    lambda x: 3.0 * x + 7.0,
    lambda x: np.exp(x),
    lambda x: x ** 3,
    lambda x: np.arctan(x),
    lambda x: 0.01 * x - 100.0,
]


@settings(max_examples=200, deadline=None)
@given(grouped_integer_scores(), st.floats(0.0, 1.0),
       st.lists(st.integers(0, len(TRANSFORMS) - 1), min_size=3, max_size=3))
def test_luck_invariant_under_group_monotone_transforms(pop, q, which):
    new = pop.score.copy()
    for j, m in enumerate(pop.masks()):
        new[m] = TRANSFORMS[which[j]](pop.score[m])
    moved = pop.replace(score=new)
    assert np.array_equal(decide_luck_egalitarian(pop, q).decisions, decide_luck_egalitarian(moved, q).decisions)


# -- Rawlsian ------------------------------------------------------------------------------


def alice_and_bob():
    # Alice tops group A, Bob tops group B
    return Population.from_labels(list("AAAAABBBBB"),
                                  [0.1, 0.2, 0.3, 0.4, 0.5, 0.4, 0.5, 0.6, 0.7, 0.8])


def test_rawlsian_zero_budget_is_luck_egalitarian():
    pop = generate_synthetic(preset("admissions"), seed=0)
    r = decide_rawlsian(pop, 0.8, 0.0)
    le = decide_luck_egalitarian(pop, 0.8)
    assert np.array_equal(r.decisions, le.decisions)
    assert not r.resources.any()


def test_rawlsian_alice_gets_more_and_prospects_level():
    pop = alice_and_bob()
    out = decide_rawlsian(pop, 0.9, budget=5.0)
    alice, bob = 4, 9
    assert out.selected.tolist() == [False] * 4 + [True] + [False] * 4 + [True]
    deficits, ref = score_deficits(pop)
    assert ref.label == "B"
    assert deficits[alice] == pytest.approx(-0.3) and deficits[bob] == 0.0
    response = ResourceResponse()
    after = response(deficits + out.resources)
    assert after[alice] == pytest.approx(after[bob])
    assert out.resources[alice] > out.resources[bob]


def test_rawlsian_resources_only_for_selected_and_within_budget():
    pop = generate_synthetic(preset("admissions", size=400), seed=4)
    out = decide_rawlsian(pop, 0.7, budget=3.0)
    assert not out.resources[~out.selected].any()
    assert out.resources.sum() <= 3.0 + 1e-9
    assert (out.resources >= 0).all()


def test_rawlsian_explicit_reference():
    pop = alice_and_bob()
    deficits, ref = score_deficits(pop, reference="A")
    assert ref.label == "A" and deficits[9] == pytest.approx(0.3)
    with pytest.raises(ConfigError, match="unknown reference"):
        score_deficits(pop, reference="Z")


def test_non_monotone_response_rejected():
    with pytest.raises(ConfigError, match="non-monotone"):
        ResourceResponse((0.0, 1.0), (0.8, 0.2))
    with pytest.raises(ConfigError, match="non-monotone"):
        ResourceResponse.parse("-1:0,0:0.7,1:0.5")


def test_response_parse_round_trip():
    r = ResourceResponse.parse("-1:0,-0.25:0.5,0:1")
    assert ResourceResponse.parse(str(r)) == r
    assert r(-0.625) == pytest.approx(0.25)
    assert r(5.0) == 1.0 and r(-5.0) == 0.0


def test_rule_validation():
    with pytest.raises(ConfigError):
        LuckEgalitarian(1.5)
    with pytest.raises(ConfigError):
        Rawlsian(0.5, budget=-1.0)


# -- shared ----------------------------------------------------------------------------


@pytest.mark.parametrize("rule", [Formal(0.5), LuckEgalitarian(0.5), Rawlsian(0.5, 1.0)])
def test_outcome_shapes_and_serialisation(hand_pop, rule):
    out = decide(hand_pop, rule)
    assert out.decisions.shape == out.resources.shape == (len(hand_pop),)
    lines = out.to_csv(hand_pop).splitlines()
    assert lines[0] == "id,group,score,decision,resources"
    assert len(lines) == len(hand_pop) + 1
    assert json.loads(out.rationale_json())["doctrine"] == rule.doctrine.value


def test_decide_dispatch_formal_plus():
    pop = ten_point_population()
    params = fit_formal_plus(pop, target_rate=0.75)
    assert np.array_equal(decide(pop, params, seed=1).decisions,
                          decide_formal_plus(pop, params, seed=1).decisions)
