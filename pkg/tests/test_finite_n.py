import itertools

import numpy as np
import pytest

from teamfield.core.errors import BudgetError, ModelError
from teamfield.core.specs import StaticGameSpec
from teamfield.finite_n import (
    FiniteGameInstance,
    check_exchangeable_br_value,
    epsilon_ne_certify,
    epsilon_sweep,
    exact_cost,
    mc_cost,
    sample_team_actions,
    size_pairs,
    team_best_response_exact,
    team_profile_law,
)
from teamfield.io import load_spec
from teamfield.mf_static import mean_field_action_law
from teamfield.policies import (
    BehavioralPolicy,
    DetPolicy,
    TeamPolicy,
    permute_profile,
)
from tests._gen import random_static_spec, random_team_policy
from tests._oracles import oracle_exact_cost
from tests._paths import GAMES


def _uniform_rule(n_obs: int, n_actions: int) -> BehavioralPolicy:
    return BehavioralPolicy.from_rows(np.full((n_obs, n_actions), 1.0 / n_actions))


def _consensus(spec: StaticGameSpec, team: int, action: int) -> TeamPolicy:
    t = spec.teams[team]
    rows = np.zeros((t.observations.size, t.actions.size))
    rows[:, action] = 1.0
    return TeamPolicy.symmetric_iid(BehavioralPolicy.from_rows(rows))


def test_exact_cost_matches_rational_enumeration_oracle():
    rng = np.random.default_rng(101)
    for _ in range(40):
        spec = random_static_spec(rng)
        n1, n2 = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        p1 = random_team_policy(
            rng, spec.teams[0].observations.size, spec.teams[0].actions.size, n1
        )
        p2 = random_team_policy(
            rng, spec.teams[1].observations.size, spec.teams[1].actions.size, n2
        )
        inst = FiniteGameInstance(spec, (n1, n2))
        for team in range(2):
            got = exact_cost(inst, p1, p2, team)
            want = oracle_exact_cost(spec, p1, p2, (n1, n2), team)
            assert got == pytest.approx(want, abs=1e-11), f"team {team}"


def test_exact_cost_invariant_under_seat_permutation():
    rng = np.random.default_rng(55)
    for _ in range(15):
        spec = random_static_spec(rng)
        n = 3
        p1 = random_team_policy(
            rng, spec.teams[0].observations.size, spec.teams[0].actions.size, n
        )
        p2 = random_team_policy(
            rng, spec.teams[1].observations.size, spec.teams[1].actions.size, n
        )
        inst = FiniteGameInstance(spec, (n, n))
        base = [exact_cost(inst, p1, p2, t) for t in range(2)]
        for sigma in itertools.permutations(range(n)):
            q1 = permute_profile(p1, sigma) if p1.kind != "symmetric-iid" else p1
            q2 = permute_profile(p2, sigma) if p2.kind != "symmetric-iid" else p2
            for t in range(2):
                assert exact_cost(inst, q1, q2, t) == pytest.approx(base[t], abs=1e-12)


def test_profile_law_sums_to_one():
    rng = np.random.default_rng(77)
    spec = random_static_spec(rng)
    p = random_team_policy(rng, spec.teams[0].observations.size, spec.teams[0].actions.size, 2)
    inst = FiniteGameInstance(spec, (2, 2))
    L = team_profile_law(inst, p, 0)
    np.testing.assert_allclose(L.sum(axis=1), 1.0, atol=1e-12)


def test_enumeration_budget_guards_exact_path():
    doc = {
        "kind": "static",
        "world": 1,
        "prior": [1.0],
        "teams": [
            {
                "actions": 3,
                "observations": 1,
                "obs_kernel": [[1.0]],
                "statistic": {"kind": "mean-embedding", "embedding": [0.0, 0.5, 1.0]},
                "cost": {"family": "constant", "params": {"value": 1.0}},
            }
        ]
        * 2,
    }
    spec = StaticGameSpec.from_dict(doc)
    inst = FiniteGameInstance(spec, (20, 20))  # 3^40 profile pairs
    rule = _uniform_rule(1, 3)
    with pytest.raises(BudgetError):
        exact_cost(inst, TeamPolicy.symmetric_iid(rule), TeamPolicy.symmetric_iid(rule), 0)
    # Monte Carlo has no such ceiling
    mean, ci = mc_cost(
        inst, TeamPolicy.symmetric_iid(rule), TeamPolicy.symmetric_iid(rule), 0, 100, 9
    )
    assert mean == pytest.approx(1.0, abs=1e-12)


def test_best_response_candidate_budget():
    doc = {
        "kind": "static",
        "world": 1,
        "prior": [1.0],
        "teams": [
            {
                "actions": 2,
                "observations": 3,
                "obs_kernel": [[0.5, 0.3, 0.2]],
                "statistic": {"kind": "mean-embedding", "embedding": [0.0, 1.0]},
                "cost": {"family": "team-coordination"},
            }
        ]
        * 2,
    }
    spec = StaticGameSpec.from_dict(doc)
    inst = FiniteGameInstance(spec, (12, 1))  # 8^12 joint deterministic candidates
    with pytest.raises(BudgetError):
        team_best_response_exact(inst, _as_team(_uniform_rule(3, 2)), 0)


def _as_team(b: BehavioralPolicy) -> TeamPolicy:
    return TeamPolicy.symmetric_iid(b)


def test_best_response_matches_oracle_brute_force():
    rng = np.random.default_rng(303)
    for _ in range(8):
        spec = random_static_spec(rng)
        n = 2
        opp = random_team_policy(
            rng, spec.teams[1].observations.size, spec.teams[1].actions.size, n
        )
        inst = FiniteGameInstance(spec, (n, n))
        profile, value = team_best_response_exact(inst, opp, 0)
        t = spec.teams[0]
        maps = list(itertools.product(range(t.actions.size), repeat=t.observations.size))
        brute = min(
            oracle_exact_cost(
                spec,
                TeamPolicy.mixture([(1.0, tuple(DetPolicy(c) for c in combo))]),
                opp,
                (n, n),
                0,
            )
            for combo in itertools.product(maps, repeat=n)
        )
        assert value == pytest.approx(brute, abs=1e-11)
        # the returned profile achieves the reported value
        achieved = exact_cost(
            inst, TeamPolicy.mixture([(1.0, tuple(profile))]), opp, 0
        )
        assert achieved == pytest.approx(value, abs=1e-12)


def test_mismatch_equilibrium_certifies_zero_at_small_and_large_n():
    spec = load_spec(GAMES / "mf_mismatch.json")
    half = TeamPolicy.symmetric_iid(BehavioralPolicy.from_rows([[0.5, 0.5]]))
    for n in (2, 8):
        rep = epsilon_ne_certify(FiniteGameInstance(spec, (n, n)), half, half)
        assert rep.method == "exact"
        assert rep.eps[0] == 0.0
        assert rep.eps[1] == 0.0


def test_spread_epsilon_decays_harmonically():
    # one fewer than the full-support count of own-team mass at the seat's
    # action is lost to the seat itself, giving eps = 0.5 / N exactly
    spec = load_spec(GAMES / "spread.json")
    half = TeamPolicy.symmetric_iid(BehavioralPolicy.from_rows([[0.5, 0.5]]))
    for n, want in ((2, 0.25), (4, 0.125), (8, 0.0625)):
        rep = epsilon_ne_certify(FiniteGameInstance(spec, (n, n)), half, half)
        assert rep.eps[0] == pytest.approx(want, abs=1e-12)
        assert rep.eps[1] == pytest.approx(want, abs=1e-12)


def test_consensus_is_exactly_optimal_in_coordination():
    spec = load_spec(GAMES / "coordination.json")
    for n in (2, 3, 4):
        inst = FiniteGameInstance(spec, (n, n))
        rep = epsilon_ne_certify(inst, _consensus(spec, 0, 0), _consensus(spec, 1, 0))
        assert rep.eps == (0.0, 0.0)


def test_mixed_center_is_not_a_finite_team_equilibrium():
    spec = load_spec(GAMES / "coordination.json")
    half = TeamPolicy.symmetric_iid(BehavioralPolicy.from_rows([[0.5, 0.5]]))
    rep = epsilon_ne_certify(FiniteGameInstance(spec, (2, 2)), half, half)
    assert rep.eps[0] == pytest.approx(0.125, abs=1e-12)
    assert rep.eps[1] == pytest.approx(0.125, abs=1e-12)


def test_epsilon_report_nonnegative_on_random_instances():
    rng = np.random.default_rng(909)
    for _ in range(10):
        spec = random_static_spec(rng)
        n1, n2 = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        p1 = random_team_policy(
            rng, spec.teams[0].observations.size, spec.teams[0].actions.size, n1
        )
        p2 = random_team_policy(
            rng, spec.teams[1].observations.size, spec.teams[1].actions.size, n2
        )
        rep = epsilon_ne_certify(FiniteGameInstance(spec, (n1, n2)), p1, p2)
        assert rep.eps[0] >= -1e-12
        assert rep.eps[1] >= -1e-12


def test_mc_cost_is_deterministic_and_consistent():
    spec = load_spec(GAMES / "mf_mismatch.json")
    half = TeamPolicy.symmetric_iid(BehavioralPolicy.from_rows([[0.5, 0.5]]))
    inst = FiniteGameInstance(spec, (3, 3))
    a = mc_cost(inst, half, half, 0, 200, 42)
    b = mc_cost(inst, half, half, 0, 200, 42)
    assert a == b
    exact = exact_cost(inst, half, half, 0)
    mean, ci = a
    assert abs(mean - exact) <= ci
    with pytest.raises(ModelError):
        mc_cost(inst, half, half, 0, 50, 42)


def test_mc_ci_covers_exact_on_random_instances():
    rng = np.random.default_rng(4242)
    misses = 0
    total = 0
    for k in range(12):
        spec = random_static_spec(rng)
        n1, n2 = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        p1 = random_team_policy(
            rng, spec.teams[0].observations.size, spec.teams[0].actions.size, n1
        )
        p2 = random_team_policy(
            rng, spec.teams[1].observations.size, spec.teams[1].actions.size, n2
        )
        inst = FiniteGameInstance(spec, (n1, n2))
        for team in range(2):
            exact = exact_cost(inst, p1, p2, team)
            mean, ci = mc_cost(inst, p1, p2, team, 400, 1000 + k)
            total += 1
            if abs(mean - exact) > max(ci, 1e-12):
                misses += 1
    assert misses <= 1, f"{misses} of {total} intervals missed"


def test_exchangeable_br_restriction_costs_nothing():
    rng = np.random.default_rng(606)
    spec = load_spec(GAMES / "mf_mismatch.json")
    for n in (2, 3):
        inst = FiniteGameInstance(spec, (n, n))
        opp = TeamPolicy.symmetric_iid(BehavioralPolicy.from_rows([[0.5, 0.5]]))
        v_all, v_exch = check_exchangeable_br_value(inst, opp, 0)
        assert abs(v_all - v_exch) <= 1e-9
        assert v_exch >= v_all - 1e-12


def test_sample_team_actions_deterministic_and_law_abiding():
    spec = load_spec(GAMES / "mf_mismatch.json")
    b = BehavioralPolicy.from_rows([[0.3, 0.7]])
    u1 = sample_team_actions(spec, 0, b, 10_000, 0, 7)
    u2 = sample_team_actions(spec, 0, b, 10_000, 0, 7)
    np.testing.assert_array_equal(u1, u2)
    emp = np.bincount(u1, minlength=2) / len(u1)
    law = mean_field_action_law(spec, 0, b)[0]
    assert abs(emp - law).max() < 0.02


def test_epsilon_sweep_exact_rows_and_size_binding():
    spec = load_spec(GAMES / "spread.json")
    half = BehavioralPolicy.from_rows([[0.5, 0.5]])
    rows = epsilon_sweep(spec, (half, half), [(2, 2), (4, 4)])
    assert [r.method for r in rows] == ["exact", "exact"]
    assert rows[0].eps == pytest.approx((0.25, 0.25))
    assert rows[1].eps == pytest.approx((0.125, 0.125))
    # a size-bound policy cannot be swept at a different size
    bound = TeamPolicy.product([half, half])
    with pytest.raises(ModelError):
        epsilon_sweep(spec, (bound, half), [(3, 3)])


def test_epsilon_sweep_mc_fallback_needs_seed():
    spec = load_spec(GAMES / "spread.json")
    half = BehavioralPolicy.from_rows([[0.5, 0.5]])
    with pytest.raises(ModelError):
        epsilon_sweep(spec, (half, half), [(40, 40)], reps=100)
    rows = epsilon_sweep(spec, (half, half), [(40, 40)], reps=100, seed=5)
    assert rows[0].method == "monte-carlo"
    assert rows[0].ci_halfwidth > 0.0
    again = epsilon_sweep(spec, (half, half), [(40, 40)], reps=100, seed=5)
    assert rows[0].eps == again[0].eps


def test_size_pairs():
    assert size_pairs([2, 4], 1.0) == [(2, 2), (4, 4)]
    assert size_pairs([4], 0.5) == [(4, 2)]
    assert size_pairs([3], 0.1) == [(3, 1)]
    with pytest.raises(ModelError):
        size_pairs([0])
    with pytest.raises(ModelError):
        size_pairs([2], ratio=0.0)
