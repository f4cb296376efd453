import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from menumatch.core import (MNL, Instance, InstanceError, Threshold, Uniform, choice_from_dict, choice_to_dict,
                            validate_assortment, validate_instance, validate_order)


def test_example1_instance_is_valid(example1_theta):
    validate_instance(Instance(example1_theta))


def test_theta_out_of_range_names_index():
    theta = np.array([[0.1, 0.2], [1.2, 0.3]])
    with pytest.raises(InstanceError, match=r"theta out of range at \(1, 0\)"):
        Instance(theta)


def test_minimal_instance():
    inst = Instance([[0.5]])
    assert inst.n_patients == 1 and inst.m_providers == 1
    assert inst.capacities.tolist() == [1]


def test_nonpositive_capacity_reported():
    with pytest.raises(InstanceError, match="nonpositive capacity at provider 1"):
        Instance(np.ones((2, 2)) * 0.5, capacities=[1, 0])


def test_dimension_mismatch():
    with pytest.raises(InstanceError, match="capacities has shape"):
        Instance(np.ones((2, 3)) * 0.5, capacities=[1, 1])
    with pytest.raises(InstanceError, match="2-d"):
        Instance(np.ones(3))
    with pytest.raises(InstanceError, match="N >= 1"):
        Instance(np.ones((0, 3)))


def test_instance_is_immutable():
    inst = Instance(np.full((2, 2), 0.5))
    with pytest.raises(ValueError):
        inst.theta[0, 0] = 0.1


@pytest.mark.parametrize("bad", [lambda: Uniform(0.0), lambda: Uniform(1.5), lambda: Threshold(0.5, 1.2),
                                 lambda: MNL(float("inf"))])
def test_choice_validation(bad):
    with pytest.raises(InstanceError):
        bad()


@pytest.mark.parametrize("spec", [Uniform(0.3), Threshold(0.4, 0.25), MNL(-0.5)])
def test_choice_dict_round_trip(spec):
    assert choice_from_dict(choice_to_dict(spec)) == spec


def test_choice_dict_rejects_unknown_keys():
    with pytest.raises(InstanceError, match="unknown keys"):
        choice_from_dict({"type": "uniform", "p": 0.5, "gamma": 1})


def test_assortment_validation():
    assert validate_assortment([[0, 1], [1, 1]]).dtype == np.int8
    with pytest.raises(InstanceError, match=r"\(0, 1\)"):
        validate_assortment([[0, 2], [1, 1]])
    with pytest.raises(InstanceError, match="does not match"):
        validate_assortment([[0, 1]], Instance(np.full((2, 2), 0.5)))


def test_order_validation():
    assert validate_order([2, 0, 1], 3).tolist() == [2, 0, 1]
    with pytest.raises(InstanceError):
        validate_order([0, 0, 1], 3)


@settings(max_examples=50, deadline=None)
@given(arrays(np.int64, st.tuples(st.integers(1, 4), st.integers(1, 4)), elements=st.integers(0, 1)))
def test_validated_assortments_are_binary(x):
    out = validate_assortment(x)
    assert set(np.unique(out)) <= {0, 1}
