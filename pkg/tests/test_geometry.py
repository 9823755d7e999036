import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accon import autodiff as ad
from accon.errors import DomainError
from accon.geometry import (
    LabelRange,
    compensated_cosine,
    compensated_cosine_tensor,
    compensation_angle,
    ideal_angle,
)

R = LabelRange(y_min=0, y_max=100)

ranges = st.tuples(st.floats(-1e3, 1e3), st.floats(1e-2, 1e3)).map(lambda t: LabelRange(y_min=t[0], y_max=t[0] + t[1]))


@st.composite
def labels_in(draw):
    r = draw(ranges)
    a = draw(st.floats(0, 1)) * r.width + r.y_min
    b = draw(st.floats(0, 1)) * r.width + r.y_min
    return r, min(a, r.y_max), min(b, r.y_max)


def test_ideal_angle_examples():
    assert ideal_angle(21, 21, R) == 0.0
    assert ideal_angle(0, 100, R) == pytest.approx(math.pi, abs=1e-15)
    assert ideal_angle(21, 3, R) == pytest.approx(-0.565486677646, abs=1e-12)


def test_compensation_angle_examples():
    assert compensation_angle(37.2, 37.2, R) == math.pi
    assert compensation_angle(0, 100, R) == pytest.approx(0.0, abs=1e-15)
    assert compensation_angle(21, 80, R) == pytest.approx(1.288052987971, abs=1e-12)


def test_out_of_range_labels():
    with pytest.raises(DomainError):
        ideal_angle(-1, 5, R)
    with pytest.raises(DomainError):
        compensation_angle(5, 100.5, R)


def test_label_range_must_be_ordered():
    with pytest.raises(ValueError):
        LabelRange(y_min=3, y_max=3)


@settings(max_examples=200, deadline=None)
@given(labels_in())
def test_antisymmetry_and_sum_to_pi(case):
    r, a, b = case
    assert ideal_angle(a, b, r) == -ideal_angle(b, a, r)
    assert ideal_angle(a, b, r) + compensation_angle(a, b, r) == pytest.approx(math.pi, abs=1e-12)
    assert -math.pi - 1e-12 <= ideal_angle(a, b, r) <= math.pi + 1e-12
    assert -1e-12 <= compensation_angle(a, b, r) <= 2 * math.pi + 1e-12


def test_compensated_cosine_examples():
    for c in (-1.0, -0.3, 0.0, 0.8, 1.0):
        assert compensated_cosine(c, math.pi, 0.0) == pytest.approx(-c, abs=1e-15)
    for phi in (0.0, 0.7, 2.5, 5.0):
        assert compensated_cosine(1.0, phi, 0.0) == pytest.approx(math.cos(phi), abs=1e-15)
    assert compensated_cosine(0.5, math.pi / 2, 0.0) == pytest.approx(-math.sqrt(0.75), abs=1e-12)


def test_cosine_clamping():
    assert compensated_cosine(1.0 + 5e-10, 0.3, 0.0) == pytest.approx(math.cos(0.3), abs=1e-15)
    with pytest.raises(DomainError):
        compensated_cosine(1.0 + 1e-6, 0.3, 0.0)
    with pytest.raises(DomainError):
        compensated_cosine(0.2, 0.3, -1e-3)


@settings(max_examples=300, deadline=None)
@given(st.floats(0, math.pi), st.floats(0, math.pi))
def test_angle_addition_identity(theta, phi):
    assert compensated_cosine(math.cos(theta), phi, 0.0) == pytest.approx(math.cos(theta + phi), abs=1e-9)


@settings(max_examples=300, deadline=None)
@given(st.floats(0, math.pi), st.floats(math.pi, 2 * math.pi))
def test_upper_branch_folds_phi(theta, phi):
    # |sin| makes phi and 2*pi - phi interchangeable
    got = compensated_cosine(math.cos(theta), phi, 0.0)
    assert got == pytest.approx(math.cos(theta + 2 * math.pi - phi), abs=1e-9)
    assert got == pytest.approx(compensated_cosine(math.cos(theta), 2 * math.pi - phi, 0.0), abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(st.floats(-1, 1), st.floats(0, 2 * math.pi), st.floats(0, 1e-2))
def test_bounded_by_cauchy_schwarz(c, phi, eps):
    assert abs(compensated_cosine(c, phi, eps)) <= math.sqrt(1 + eps) + 1e-12


@pytest.mark.parametrize("c", [-1.0, -0.5, 0.0, 0.9, 1.0])
def test_continuous_in_phi(c):
    eps = 1e-6
    step = 1e-4
    phi = np.arange(0.0, 2 * math.pi, step)
    vals = compensated_cosine(np.full_like(phi, c), phi, eps)
    # |d/dphi| <= |c| + sqrt(1 - c^2 + eps)
    lip = abs(c) + math.sqrt(1 - c * c + eps)
    assert np.max(np.abs(np.diff(vals))) <= lip * step * (1 + 1e-9)


def test_array_input_matches_scalar():
    rng = np.random.default_rng(0)
    c = rng.uniform(-1, 1, 20)
    phi = rng.uniform(0, 2 * math.pi, 20)
    vec = compensated_cosine(c, phi, 1e-6)
    assert all(vec[k] == compensated_cosine(c[k], phi[k], 1e-6) for k in range(20))


def test_tensor_version_matches_and_is_differentiable_at_endpoints():
    c = ad.Tensor(np.array([[-1.0, 1.0], [0.3, 1.0]]), requires_grad=True)
    phi = np.array([[0.4, 2.0], [3.0, 5.5]])
    out = compensated_cosine_tensor(c, phi, 1e-6)
    assert np.allclose(out.data, compensated_cosine(c.data, phi, 1e-6), atol=1e-15)
    ad.backward(ad.tsum(out))
    assert np.isfinite(c.grad).all()


def test_tensor_mask_leaves_other_entries_plain():
    c = ad.Tensor(np.array([[1.0, 0.2], [0.2, 1.0]]), requires_grad=True)
    mask = np.array([[False, True], [True, False]])
    phi = np.full((2, 2), 1.0)
    out = compensated_cosine_tensor(c, phi, 0.0, mask=mask)
    assert out.data[0, 0] == 1.0 and out.data[1, 1] == 1.0
    assert out.data[0, 1] == pytest.approx(compensated_cosine(0.2, 1.0, 0.0), abs=1e-15)
    ad.backward(ad.tsum(out))
    assert np.isfinite(c.grad).all() and c.grad[0, 0] == 1.0
