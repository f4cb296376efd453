import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_force_metrics, random_instance
from menumatch.core import Instance, Uniform
from menumatch.oracle import exact_expected_metrics, exhaustive_optimal_assortment
from menumatch.policies import (build_policy, pairwise_assignment, pairwise_swap_gain, policy_dynamic_pairwise,
                                policy_greedy, policy_group, policy_pairwise, policy_random,
                                single_provider_optimal, swap_gains)


def test_random_policy_is_seeded_bernoulli():
    inst = Instance(np.full((100, 100), 0.5))
    a = policy_random(inst, np.random.default_rng(1))
    assert np.array_equal(a, policy_random(inst, np.random.default_rng(1)))
    assert abs(a.mean() - 0.5) < 0.02
    assert policy_random(Instance([[0.5]]), np.random.default_rng(0)).shape == (1, 1)


def test_greedy_is_all_ones(example2):
    assert policy_greedy(example2).tolist() == [[1], [1], [1]]


def test_pairwise_example2(example2):
    x = policy_pairwise(example2)
    assert x.ravel().tolist() == [1, 0, 0]
    assert exact_expected_metrics(example2, x).mq == pytest.approx(0.175, abs=1e-12)


def test_pairwise_trivial():
    inst = Instance([[0.4]], choice=Uniform(1.0))
    e = exact_expected_metrics(inst, policy_pairwise(inst))
    assert e.mq == pytest.approx(0.4) and e.mr == pytest.approx(1.0)


def test_gain_example2(example2):
    v = pairwise_assignment(example2).v
    assert pairwise_swap_gain(example2, v, 0, 1) == pytest.approx(0.21875 - 0.175, abs=1e-12)


def test_gain_zero_cross_quality_is_nonpositive():
    inst = Instance(np.array([[0.8, 0.0], [0.0, 0.6]]), choice=Uniform(0.7))
    v = pairwise_assignment(inst).v
    assert pairwise_swap_gain(inst, v, 0, 1) <= 1e-15


def test_gain_saturated_is_zero():
    inst = Instance(np.ones((2, 2)), choice=Uniform(1.0))
    v = pairwise_assignment(inst).v
    assert pairwise_swap_gain(inst, v, 0, 1) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_gains_equal_oracle_difference(n, m, seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n, m)
    v = pairwise_assignment(inst).v
    base = policy_pairwise(inst)
    base_mq = brute_force_metrics(inst, base)[1]
    gains = swap_gains(inst, v)
    for i in range(n):
        for k in range(i + 1, n):
            x = base.copy()
            for a in (i, k):
                for b in (i, k):
                    if v[b] >= 0:
                        x[a, v[b]] = 1
            assert gains[i, k] == pytest.approx(brute_force_metrics(inst, x)[1] - base_mq, abs=1e-12)
    assert np.allclose(gains, gains.T)


def test_group_example2(example2):
    assert policy_group(example2, matched_only=True).ravel().tolist() == [1, 0, 0]
    x = policy_group(example2)
    assert x.ravel().tolist() == [1, 1, 0]
    e = exact_expected_metrics(example2, x)
    assert e.mq == pytest.approx(0.21875, abs=1e-12)
    # the unmatched second patient joins the group, so the rate rises above pairwise's 0.25
    assert e.mr == pytest.approx(0.3125, abs=1e-12)


def test_group_without_positive_gains_is_pairwise():
    inst = Instance(np.array([[0.9, 0.0], [0.0, 0.9]]), choice=Uniform(0.5))
    assert np.array_equal(policy_group(inst), policy_pairwise(inst))


def test_single_provider_example2():
    s, x = single_provider_optimal([0.7, 0.7, 0.1], 0.75)
    assert s == 2 and x.ravel().tolist() == [1, 1, 0]


def test_single_provider_p_one():
    s, _ = single_provider_optimal([0.9, 0.5, 0.2], 1.0)
    assert s == 1


@pytest.mark.parametrize("seed", range(6))
def test_single_provider_matches_exhaustive(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(1, 7))
    p = float(rng.uniform(0.1, 1))
    inst = random_instance(rng, n, 1, p=p)
    _, x = single_provider_optimal(inst.theta[:, 0], p)
    _, best = exhaustive_optimal_assortment(inst)
    assert exact_expected_metrics(inst, x).mq == pytest.approx(best, abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_rate_and_quality_bounds_small(seed):
    rng = np.random.default_rng(200 + seed)
    n, m = int(rng.integers(1, 5)), int(rng.integers(1, 4))
    inst = random_instance(rng, n, m)
    p = inst.choice.p
    greedy = exact_expected_metrics(inst, policy_greedy(inst))
    pair = exact_expected_metrics(inst, policy_pairwise(inst))
    group = exact_expected_metrics(inst, policy_group(inst, matched_only=True))
    assert greedy.mr <= max(p, m / n) + 1e-9
    assert pair.mr == pytest.approx(p * min(m, n) / n, abs=1e-9)
    assert group.mr == pytest.approx(pair.mr, abs=1e-9)
    if n * m <= 12:
        _, best_mr = exhaustive_optimal_assortment(inst, "mr")
        assert greedy.mr >= best_mr - 1e-9
        _, best_mq = exhaustive_optimal_assortment(inst, "mq")
        assert pair.mq >= p * best_mq - 1e-9


def test_greedy_rate_can_fall_below_min_of_p_and_supply_ratio():
    # one provider, three patients: the provider stays open until someone accepts
    p = 0.625
    inst = Instance(np.array([[0.5], [0.6], [0.7]]), choice=Uniform(p))
    mr = exact_expected_metrics(inst, policy_greedy(inst)).mr
    assert mr == pytest.approx((1 - (1 - p) ** 3) / 3)
    assert mr < min(p, 1 / 3)


def test_dynamic_first_menu_is_static_pairwise():
    rng = np.random.default_rng(3)
    inst = random_instance(rng, 4, 3)
    menu = policy_dynamic_pairwise(inst)
    static = policy_pairwise(inst)
    for i in range(4):
        assert np.array_equal(menu(i, np.ones(4, bool), inst.capacities.copy()), static[i].astype(bool))


def test_dynamic_never_offers_taken_provider():
    rng = np.random.default_rng(4)
    inst = random_instance(rng, 5, 3)
    menu = policy_dynamic_pairwise(inst)
    remaining = np.array([1, 0, 1])
    pending = np.array([False, True, True, True, True])
    for i in range(1, 5):
        assert not menu(i, pending, remaining)[1]


@pytest.mark.parametrize("seed", range(6))
def test_dynamic_beats_static_in_expectation(seed):
    rng = np.random.default_rng(300 + seed)
    inst = random_instance(rng, 3, 3)
    dyn = exact_expected_metrics(inst, menu=policy_dynamic_pairwise(inst))
    assert dyn.mq == pytest.approx(brute_force_metrics(inst, menu=policy_dynamic_pairwise(inst))[1], abs=1e-12)
    assert dyn.mq >= exact_expected_metrics(inst, policy_pairwise(inst)).mq - 1e-12


def test_capacity_one_paths_agree():
    rng = np.random.default_rng(6)
    theta = rng.random((6, 4))
    a, b = Instance(theta), Instance(theta, capacities=[1, 1, 1, 1])
    for name in ("pairwise", "group", "gd"):
        assert np.array_equal(build_policy(name, a), build_policy(name, b))


def test_capacity_pairwise_respects_capacity():
    rng = np.random.default_rng(7)
    inst = Instance(rng.random((10, 3)), capacities=[2, 3, 1])
    x = policy_pairwise(inst)
    assert np.all(x.sum(axis=0) <= [2, 3, 1]) and x.sum() == 6
    assert np.all(x.sum(axis=1) <= 1)


def test_build_policy_unknown():
    with pytest.raises(ValueError, match="unknown policy"):
        build_policy("nope", Instance([[0.5]]))


def test_policies_deterministic():
    rng = np.random.default_rng(8)
    inst = random_instance(rng, 6, 3)
    for name in ("random", "greedy", "pairwise", "group", "gd"):
        assert np.array_equal(build_policy(name, inst, seed=3), build_policy(name, inst, seed=3))
