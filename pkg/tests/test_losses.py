import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import special_ortho_group

from hcam.errors import ContractError, LabelRangeError, ShapeError
from hcam.losses import LossConfig, combined_loss, cross_entropy, positive_weights, sup_con_loss
from hcam.numcore import Tensor, grad_check, l2_normalize
from hcam.verify import run_suite
from oracles import cross_entropy_bruteforce, sup_con_bruteforce

E1, E2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])


def unit_rows(rng, B, F):
    x = rng.standard_normal((B, F))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


# -- cross entropy ------------------------------------------------------------
def test_ce_examples():
    assert cross_entropy(np.zeros((3, 2)), [0, 1, 1]).item() == pytest.approx(math.log(2))
    assert cross_entropy(np.array([[1e4, 0.0]]), [0]).item() == pytest.approx(0.0, abs=1e-12)
    assert cross_entropy(np.array([[1.0, 0.0]]), [1]).item() == pytest.approx(1.3133, abs=1e-4)


def test_ce_errors():
    with pytest.raises(LabelRangeError):
        cross_entropy(np.zeros((2, 3)), [0, 3])
    with pytest.raises(LabelRangeError):
        cross_entropy(np.zeros((2, 3)), [-1, 0])
    with pytest.raises(ShapeError):
        cross_entropy(np.zeros((2, 3)), [0])


def test_ce_matches_bruteforce(rng):
    for _ in range(20):
        z = rng.standard_normal((5, 4)) * 3
        y = rng.integers(0, 4, 5)
        assert cross_entropy(z, y).item() == pytest.approx(cross_entropy_bruteforce(z.tolist(), y), abs=1e-12)


def test_weighted_ce_is_weighted_mean():
    z = np.array([[2.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
    y = np.array([0, 1, 0])
    per = [-np.log(np.exp(r[c]) / np.exp(r).sum()) for r, c in zip(z, y)]
    w = np.array([1.0, 3.0])
    expect = (per[0] * 1 + per[1] * 3 + per[2] * 1) / 5
    assert cross_entropy(z, y, w).item() == pytest.approx(expect)
    assert cross_entropy(z, y, [1.0, 1.0]).item() == pytest.approx(cross_entropy(z, y).item())


# -- sup-con ----------------------------------------------------------------
def test_supcon_identical_pair_is_zero():
    assert sup_con_loss(np.stack([E1, E1]), [0, 0], tau=1.0).item() == pytest.approx(0.0, abs=1e-12)


def test_supcon_no_positives_is_zero():
    assert sup_con_loss(np.stack([E1, E2]), [0, 1], tau=1.0).item() == 0.0


def test_supcon_three_row_fixture():
    x = np.stack([E1, E1, E2])
    expect = 2 * -math.log(math.e / (math.e + 1))
    assert expect == pytest.approx(0.6265, abs=1e-4)
    assert sup_con_loss(x, [0, 0, 1], tau=1.0).item() == pytest.approx(expect, abs=1e-12)
    assert sup_con_bruteforce(x, [0, 0, 1], 1.0) == pytest.approx(expect, abs=1e-12)


def test_supcon_contract_errors():
    with pytest.raises(ContractError, match="unit-norm"):
        sup_con_loss(np.array([[1.0, 0.0], [0.0, 2.0]]), [0, 0])
    with pytest.raises(ContractError):
        sup_con_loss(np.array([[1.0, 0.0]]), [0])
    with pytest.raises(ContractError):
        sup_con_loss(np.stack([E1, E2]), [0, 0], tau=0.0)
    # within the tolerance band is fine
    sup_con_loss(np.array([[1.0 + 5e-5, 0.0], [0.0, 1.0]]), [0, 0])


@pytest.mark.parametrize("self_exclude", [True, False])
def test_supcon_matches_bruteforce(rng, self_exclude):
    for _ in range(100):
        B = int(rng.integers(2, 9))
        x = unit_rows(rng, B, int(rng.integers(2, 6)))
        y = rng.integers(0, int(rng.integers(1, 5)), B)
        tau = float(rng.uniform(0.1, 2.0))
        got = sup_con_loss(x, y, tau, self_exclude).item()
        assert got == pytest.approx(sup_con_bruteforce(x, y, tau, self_exclude), abs=1e-8)


def test_supcon_is_nonnegative_with_self_exclusion(rng):
    for _ in range(50):
        x = unit_rows(rng, 6, 3)
        assert sup_con_loss(x, rng.integers(0, 2, 6), 0.3).item() >= 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_supcon_permutation_and_rotation_invariance(seed):
    rng = np.random.default_rng(seed)
    B, F = int(rng.integers(2, 8)), int(rng.integers(2, 5))
    x = unit_rows(rng, B, F)
    y = rng.integers(0, 3, B)
    base = sup_con_loss(x, y, 0.5).item()
    perm = rng.permutation(B)
    assert sup_con_loss(x[perm], y[perm], 0.5).item() == pytest.approx(base, abs=1e-9)
    R = special_ortho_group.rvs(F, random_state=seed) if F > 1 else np.eye(1)
    assert sup_con_loss(x @ R.T, y, 0.5).item() == pytest.approx(base, abs=1e-9)


def test_supcon_decreases_as_positive_pair_aligns():
    e3 = np.array([0.0, 0.0, 1.0])
    losses = []
    for theta in (1.2, 0.8, 0.4, 0.1):
        x = np.stack([[1.0, 0, 0], [np.cos(theta), np.sin(theta), 0.0], e3])
        losses.append(sup_con_loss(x, [0, 0, 1], 0.5).item())
    assert all(a > b for a, b in zip(losses, losses[1:]))


def test_positive_weights_rows():
    w = positive_weights([0, 0, 0, 1])
    np.testing.assert_allclose(w[0], [0, 0.5, 0.5, 0])
    np.testing.assert_array_equal(w[3], 0.0)
    w = positive_weights([0, 1], self_exclude=False)
    np.testing.assert_array_equal(w, np.eye(2))


# -- combined ---------------------------------------------------------------
def test_combined_fixture_half():
    x = np.stack([E1, E1, E2])
    z = np.zeros((3, 2))
    got = combined_loss(z, x, [0, 0, 1], LossConfig(beta=0.5, tau=1.0)).item()
    assert got == pytest.approx(0.6598, abs=1e-4)


def test_combined_endpoints_exact(rng):
    for _ in range(20):
        z, x, y = rng.standard_normal((5, 3)), unit_rows(rng, 5, 4), rng.integers(0, 3, 5)
        assert combined_loss(z, x, y, LossConfig(beta=1.0)).item() == cross_entropy(z, y).item()
        assert combined_loss(z, x, y, LossConfig(beta=0.0)).item() == sup_con_loss(x, y, 0.1).item()


def test_combined_linear_in_beta(rng):
    z, x, y = rng.standard_normal((6, 3)), unit_rows(rng, 6, 4), rng.integers(0, 3, 6)
    f = lambda b: combined_loss(z, x, y, LossConfig(beta=b, tau=0.2)).item()
    for b in (0.1, 0.3, 0.7):
        assert f(b) == pytest.approx((1 - b) * f(0.0) + b * f(1.0), abs=1e-10)


def test_loss_config_validation():
    with pytest.raises(ContractError):
        LossConfig(beta=1.5)
    with pytest.raises(ContractError):
        LossConfig(tau=0)
    with pytest.raises(ContractError):
        LossConfig(class_weights=[1.0, -1.0])
    assert LossConfig().beta == 0.9 and LossConfig().tau == 0.1


def test_combined_gradcheck_four_utterances(rng):
    z = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    x = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
    y = np.array([0, 1, 0, 2])
    rep = grad_check(lambda: combined_loss(z, l2_normalize(x), y, LossConfig(beta=0.5, tau=0.5)), [z, x])
    assert rep.max_rel_error < 1e-4


@pytest.mark.parametrize("name", ["cross_entropy", "weighted_cross_entropy", "sup_con", "combined_loss"])
def test_loss_gradchecks(name):
    (r,) = run_suite(names=[name])
    assert r["passed"]


def test_cross_entropy_gradcheck_tight(rng):
    z = Tensor(rng.standard_normal((6, 4)) * 2, requires_grad=True)
    y = rng.integers(0, 4, 6)
    assert grad_check(lambda: cross_entropy(z, y), [z], tolerance=1e-6).max_rel_error < 1e-6
