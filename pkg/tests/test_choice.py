import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from menumatch.choice import (acceptance_probability, best_offered, sample_selection, select_from_uniform,
                              selection_probabilities)
from menumatch.core import ABSTAIN, MNL, Threshold, Uniform

specs = st.one_of(
    st.builds(Uniform, st.floats(0.01, 1.0)),
    st.builds(Threshold, st.floats(0.01, 1.0), st.floats(0.0, 1.0)),
    st.builds(MNL, st.floats(-2.0, 2.0)),
)


def test_uniform_tie_goes_to_lowest_index():
    d = selection_probabilities(Uniform(0.75), [0.7, 0.7, 0.1], [1, 1, 1])
    assert d.probs.tolist() == [0.75, 0.0, 0.0]
    assert d.abstain == pytest.approx(0.25)


@pytest.mark.parametrize("spec", [Uniform(0.5), Threshold(0.5, 0.2), MNL(0.3)])
def test_empty_mask_abstains(spec):
    d = selection_probabilities(spec, [0.4, 0.9], [0, 0])
    assert d.abstain == 1.0 and not d.probs.any()


def test_mnl_half_when_exit_equals_utility():
    d = selection_probabilities(MNL(0.6), [0.6, 0.2], [1, 0])
    assert d.probs[0] == pytest.approx(0.5) and d.abstain == pytest.approx(0.5)


def test_sample_p_branch_picks_best():
    class Low:
        def random(self):
            return 0.0
    assert sample_selection(Uniform(0.5), [0.5, 0.6, 0.9], [1, 1, 1], Low()) == 2


def test_sample_abstain_branch():
    class High:
        def random(self):
            return 0.99
    assert sample_selection(Uniform(0.5), [0.5, 0.6, 0.9], [1, 1, 1], High()) == ABSTAIN


def test_threshold_below_alpha_always_abstains():
    rng = np.random.default_rng(0)
    spec = Threshold(1.0, 0.75)
    assert all(sample_selection(spec, [0.7, 0.7, 0.1], [1, 1, 1], rng) == ABSTAIN for _ in range(200))


def test_threshold_is_inclusive():
    d = selection_probabilities(Threshold(1.0, 0.7), [0.7, 0.1], [1, 1])
    assert d.probs[0] == 1.0


@settings(max_examples=200, deadline=None)
@given(specs, st.lists(st.floats(0, 1), min_size=1, max_size=6), st.data())
def test_distribution_is_proper(spec, theta, data):
    m = len(theta)
    mask = np.array(data.draw(st.lists(st.booleans(), min_size=m, max_size=m)))
    d = selection_probabilities(spec, theta, mask)
    assert np.all(d.probs >= 0) and d.abstain >= 0
    assert d.abstain + d.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert not d.probs[~mask].any()
    if isinstance(spec, Uniform) and mask.any() and d.probs.any():
        masked = np.where(mask, theta, -np.inf)
        assert int(np.argmax(d.probs)) == int(np.flatnonzero(masked == masked.max())[0])


@settings(max_examples=100, deadline=None)
@given(st.floats(-2, 2), st.lists(st.floats(0, 1), min_size=2, max_size=6), st.data())
def test_mnl_adding_provider_never_raises_abstain(gamma, theta, data):
    m = len(theta)
    mask = np.array(data.draw(st.lists(st.booleans(), min_size=m, max_size=m)))
    k = data.draw(st.integers(0, m - 1))
    bigger = mask.copy()
    bigger[k] = True
    spec = MNL(gamma)
    assert selection_probabilities(spec, theta, bigger).abstain <= selection_probabilities(spec, theta, mask).abstain + 1e-15


@pytest.mark.parametrize("spec", [Uniform(0.6), Threshold(0.8, 0.5), MNL(0.2)])
def test_monte_carlo_matches_probabilities(spec):
    theta = np.array([0.3, 0.8, 0.55, 0.8])
    mask = np.array([1, 1, 1, 0], dtype=bool)
    n = 100_000
    u = np.random.default_rng(5).random(n)
    sel = select_from_uniform(spec, np.broadcast_to(theta, (n, 4)), np.broadcast_to(mask, (n, 4)), u)
    d = selection_probabilities(spec, theta, mask)
    for j, pr in [(j, d.probs[j]) for j in range(4)] + [(ABSTAIN, d.abstain)]:
        freq = np.mean(sel == j)
        se = max(np.sqrt(pr * (1 - pr) / n), 1e-12)
        assert abs(freq - pr) <= 4 * se + 1e-12


def test_best_offered_stack():
    theta = np.array([[0.2, 0.9], [0.5, 0.5]])
    mask = np.array([[1, 0], [1, 1]], dtype=bool)
    assert best_offered(theta, mask).tolist() == [0, 0]
    assert best_offered(theta, np.zeros_like(mask)).tolist() == [-1, -1]


def test_acceptance_probability():
    assert acceptance_probability(Threshold(0.5, 0.4), np.array([0.3, 0.4])).tolist() == [0.0, 0.5]
    assert acceptance_probability(MNL(0.0), np.array([0.0]))[0] == pytest.approx(0.5)
