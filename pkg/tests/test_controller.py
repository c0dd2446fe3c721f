import logging

import numpy as np
import pytest

from services.controller import (
    Branch,
    ControllerInputError,
    GainSet,
    InvariantError,
    RegressorConditioningError,
    block_gamma,
    boundary_function,
    control_input,
    filtered_error_from_closed_loop,
    filtered_error_from_rate,
    lambda0,
    lambda0_weight,
    lambda1,
    mu_dot,
    nb_signal,
    project_update,
    select_branch,
    sgn,
    tracking_error,
)


def gains(beta=1.0, theta_bar=1.0, K=2.0, alpha=2.0, Gamma=None, m=1):
    return GainSet(
        alpha=alpha,
        K=K,
        beta=beta,
        Gamma=np.eye(2) if Gamma is None else Gamma,
        theta_bar=theta_bar,
        m=m,
    )


# ================== ОШИБКИ ==================


def test_tracking_error():
    assert tracking_error(np.array([0.5]), np.array([0.5])).tolist() == [0.0]
    assert tracking_error(np.array([1.0, 2.0]), np.array([0.0, 1.0])).tolist() == [1.0, 1.0]


def test_tracking_error_dimension_mismatch():
    with pytest.raises(ControllerInputError):
        tracking_error(np.array([1.0, 2.0]), np.array([1.0]))


def test_filtered_error_both_paths_agree():
    # S1, t = 0: x = 1, θ = [1, 0], θ̂ = 0, μ = 0, α = 1
    e = np.array([1.0])
    Y = np.array([[1.0, 1.0]])
    Yd = np.array([[0.0, 1.0]])
    theta = np.array([1.0, 0.0])
    xd_dot = np.array([1.0])
    u = control_input(Yd, np.zeros(2), e, xd_dot, np.zeros(1), 1.0)
    assert u.tolist() == [0.0]

    r = filtered_error_from_closed_loop(e, Y, theta, u, xd_dot, 1.0)
    e_dot = Y @ theta + u - xd_dot
    assert r.tolist() == [1.0]
    assert filtered_error_from_rate(e_dot, e, 1.0).tolist() == r.tolist()


def test_filtered_error_zero_at_perfect_tracking():
    Y = np.array([[0.4, 1.0]])
    theta = np.array([2.0, -1.0])
    xd_dot = np.array([0.3])
    u = xd_dot - Y @ theta
    r = filtered_error_from_closed_loop(np.zeros(1), Y, theta, u, xd_dot, 2.0)
    assert r == pytest.approx([0.0], abs=1e-15)


def test_control_input_example():
    u = control_input(
        np.array([[0.0, 1.0]]), np.array([0.5, 0.1]), np.array([1.0]), np.array([1.0]), np.array([0.2]), 2.0
    )
    assert u == pytest.approx([-0.9], abs=1e-15)


def test_control_input_feedforward_only():
    xd_dot = np.array([0.7])
    assert control_input(np.array([[0.3, 1.0]]), np.zeros(2), np.zeros(1), xd_dot, np.zeros(1), 2.0).tolist() == [0.7]


def test_sgn_of_zero_is_zero():
    assert sgn(np.array([-2.0, 0.0, 3.0])).tolist() == [-1.0, 0.0, 1.0]


# ================== Λ₀ ==================


def test_lambda0_scalar_example():
    L0 = lambda0(np.array([[0.6, 1.0]]), np.array([0.2]), gains(beta=1.0, theta_bar=2.0))
    assert L0 == pytest.approx([0.6 / 1.36, 1.0 / 1.36], abs=1e-12)
    assert L0 == pytest.approx([0.44118, 0.73529], abs=1e-5)


def test_lambda0_zero_error():
    assert lambda0(np.array([[0.6, 1.0]]), np.zeros(1), gains()).tolist() == [0.0, 0.0]


def test_lambda0_zero_yh_block():
    L0 = lambda0(np.array([[0.0, 1.0]]), np.array([-0.3]), gains(beta=2.5))
    assert L0 == pytest.approx([0.0, -2.5], abs=1e-15)


def test_lambda0_satisfies_regressor_identity():
    # Y_d·Λ₀ = β·sgn(e) для любой допустимой Γ
    Yd = np.array([[0.3, -1.2, 1.0, 0.0], [2.0, 0.5, 0.0, 1.0]])
    Gamma = block_gamma(np.array([[2.0, 0.5], [0.5, 1.0]]), np.array([[3.0, 0.0], [0.0, 0.5]]))
    g = gains(beta=1.7, Gamma=Gamma, m=2)
    e = np.array([0.4, -0.01])
    assert Yd @ lambda0(Yd, e, g) == pytest.approx(1.7 * np.sign(e), abs=1e-12)


def test_lambda0_weight_rejects_ill_conditioned_matrix():
    Gamma = np.diag([1.0, 1e-14, 1e-14])
    Yd = np.array([[1.0, 1.0, 0.0], [1.0, 0.0, 1.0]])
    with pytest.raises(RegressorConditioningError):
        lambda0_weight(Yd, gains(Gamma=Gamma))


# ================== ПРОЕКЦИЯ ==================


def test_projection_interior_passthrough():
    theta_hat = np.array([0.5, 0.0])
    L0 = np.array([3.0, -1.0])
    out, branch = project_update(theta_hat, L0, gains(theta_bar=1.0))
    assert branch is Branch.INTERIOR
    assert out is L0


def test_projection_annihilates_radial_update():
    theta_hat = np.array([0.6, 0.8])
    out, branch = project_update(theta_hat, 2.0 * theta_hat, gains(theta_bar=1.0))
    assert branch is Branch.BOUNDARY
    assert out == pytest.approx([0.0, 0.0], abs=1e-15)


def test_projection_example():
    theta_hat = np.array([1.0, 0.0])
    out, branch = project_update(theta_hat, np.array([1.0, 1.0]), gains(theta_bar=1.0))
    assert branch is Branch.BOUNDARY
    assert out.tolist() == [0.0, 1.0]
    assert float(2.0 * theta_hat @ out) == 0.0


def test_inward_update_on_boundary_is_interior():
    assert select_branch(np.array([1.0, 0.0]), np.array([-1.0, 1.0]), 1.0) is Branch.INTERIOR


def test_boundary_function_sign():
    assert boundary_function(np.array([0.5, 0.0]), 1.0) < 0
    assert boundary_function(np.array([1.0, 0.0]), 1.0) == 0.0


def test_lambda1_needs_nonzero_gradient():
    with pytest.raises(InvariantError):
        lambda1(np.zeros(2), np.array([1.0, 0.0]))


# ================== μ̇ ==================


def test_mu_dot_boundary_example():
    theta_hat = np.array([1.0, 0.0])
    L0 = np.array([1.0, 1.0])
    g = gains(theta_bar=1.0, K=2.0)
    L1, branch = project_update(theta_hat, L0, g)
    out = mu_dot(branch, np.array([0.5]), np.array([[0.6, 1.0]]), L0, L1, g)
    assert out == pytest.approx([-1.6], abs=1e-15)


def test_mu_dot_interior_zero_r():
    L0 = np.array([0.2, 0.1])
    assert mu_dot(Branch.INTERIOR, np.zeros(1), np.array([[0.6, 1.0]]), L0, L0, gains()).tolist() == [0.0]


def test_mu_dot_boundary_with_tangential_update():
    L0 = np.array([0.0, 1.0])
    out = mu_dot(Branch.BOUNDARY, np.array([0.5]), np.array([[0.6, 1.0]]), L0, L0.copy(), gains(K=2.0))
    assert out.tolist() == [-1.0]


def test_mu_dot_detects_branch_mismatch():
    with pytest.raises(InvariantError):
        mu_dot(Branch.INTERIOR, np.zeros(1), np.array([[0.6, 1.0]]), np.array([1.0, 1.0]), np.array([0.0, 1.0]), gains())


# ================== УСИЛЕНИЯ ==================


def test_gamma_must_be_block_diagonal():
    Gamma = np.array([[1.0, 0.1], [0.1, 1.0]])
    with pytest.raises(ControllerInputError, match="block diagonal"):
        gains(Gamma=Gamma)


def test_gamma_must_be_positive_definite():
    with pytest.raises(ControllerInputError):
        gains(Gamma=np.diag([1.0, -1.0]))


@pytest.mark.parametrize("field", ["alpha", "K", "beta", "theta_bar"])
def test_gains_must_be_positive(field):
    with pytest.raises(ControllerInputError):
        gains(**{field: 0.0})


def test_small_K_is_allowed_with_warning(caplog):
    with caplog.at_level(logging.WARNING, logger="services.controller"):
        g = gains(K=0.4)
    assert g.lambda3 == pytest.approx(-0.1)
    assert "lambda3" in caplog.text


def test_gain_properties():
    g = gains(Gamma=block_gamma(2.0, 0.5))
    assert (g.p, g.n) == (2, 1)
    assert g.lambda_min_gamma2 == pytest.approx(0.5)
    assert g.gamma_norm == pytest.approx(2.0)


def test_nb_signal():
    Yd = np.array([[0.5, 1.0]])
    Yd_dot = np.array([[1.0, 0.0]])
    out = nb_signal(Yd, Yd_dot, np.array([1.0, 0.0]), np.array([2.0, 0.0]), np.array([0.25, 0.0]))
    assert out.tolist() == [1.0 + 0.75]
