import numpy as np
import pytest
from pydantic import ValidationError as PydanticValidationError

from sgbh.core.exceptions import ValidationError
from sgbh.schemas.model import ModelParams, TruncationLevel
from sgbh.services.model_service import (
    advection_derivative,
    advection_nonlinearity,
    eta_n,
    lp_norm,
    phi_n,
    reaction_derivative,
    reaction_expanded,
    reaction_nonlinearity,
    truncate_field,
    truncated_nonlinearities,
)


@pytest.mark.parametrize("delta", [1, 2, 3])
def test_reaction_factored_and_expanded_agree(delta):
    u = np.linspace(-2.0, 2.0, 41)
    np.testing.assert_allclose(
        reaction_nonlinearity(u, 0.3, delta), reaction_expanded(u, 0.3, delta), rtol=1e-12, atol=1e-12
    )


def test_reaction_roots():
    # c vanishes at 0, gamma^(1/delta) and 1
    for root in (0.0, 0.25 ** 0.5, 1.0):
        assert abs(float(reaction_nonlinearity(root, 0.25, 2))) < 1e-15


@pytest.mark.parametrize("delta", [1, 2])
def test_derivatives_match_central_differences(delta):
    u = np.linspace(-1.5, 1.5, 13)
    eps = 1e-6
    fd_c = (reaction_nonlinearity(u + eps, 0.5, delta) - reaction_nonlinearity(u - eps, 0.5, delta)) / (2 * eps)
    fd_p = (advection_nonlinearity(u + eps, delta) - advection_nonlinearity(u - eps, delta)) / (2 * eps)
    np.testing.assert_allclose(reaction_derivative(u, 0.5, delta), fd_c, atol=1e-6)
    np.testing.assert_allclose(advection_derivative(u, delta), fd_p, atol=1e-6)


def test_lp_norm_of_constant():
    m = 15
    h = 1.0 / (m + 1)
    assert lp_norm(np.ones(m), h, 3.0) == pytest.approx((m * h) ** (1 / 3))


def test_phi_n_closed_at_threshold():
    trunc = TruncationLevel(n=2.0, p=3.0)
    assert phi_n(8.0, trunc) == 1.0
    assert phi_n(0.0, trunc) == 1.0
    assert phi_n(27.0, trunc) == pytest.approx(2.0 / 3.0)


def test_truncate_field_inside_ball_is_identity():
    h = 1.0 / 16
    y = 0.1 * np.sin(np.pi * np.arange(1, 16) * h)
    trunc = TruncationLevel(n=1.0, p=3.0)
    out = truncate_field(y, trunc, h)
    assert np.array_equal(out, y)


def test_truncate_field_projects_onto_sphere_and_is_idempotent():
    h = 1.0 / 16
    y = 5.0 * np.sin(np.pi * np.arange(1, 16) * h)
    trunc = TruncationLevel(n=1.0, p=3.0)
    once = truncate_field(y, trunc, h)
    assert lp_norm(once, h, 3.0) == pytest.approx(1.0, rel=1e-12)
    twice = truncate_field(once, trunc, h)
    np.testing.assert_array_equal(twice, once)
    assert lp_norm(once, h, 3.0) <= 1.0


def test_truncate_field_row_wise():
    h = 1.0 / 16
    rows = np.vstack([0.1 * np.ones(15), 10.0 * np.ones(15)])
    out = truncate_field(rows, TruncationLevel(n=1.0, p=3.0), h)
    np.testing.assert_array_equal(out[0], rows[0])
    assert lp_norm(out[1], h, 3.0) == pytest.approx(1.0)


def test_eta_n_profile():
    np.testing.assert_allclose(eta_n([0.0, 2.0, 2.5, 3.0, 4.0], 2.0), [1.0, 1.0, 0.5, 0.0, 0.0])


def test_truncated_nonlinearities_vanish_beyond_cutoff():
    u = np.array([0.5, -0.5, 3.5, -4.0])
    p_n, c_n = truncated_nonlinearities(u, 2.0, 0.5, 1)
    np.testing.assert_allclose(p_n[:2], advection_nonlinearity(u[:2], 1))
    np.testing.assert_allclose(c_n[:2], reaction_nonlinearity(u[:2], 0.5, 1))
    assert np.all(p_n[2:] == 0) and np.all(c_n[2:] == 0)


def test_truncate_field_threshold_is_exact():
    h = 1.0 / 16
    y = np.ones(15)
    norm = float(lp_norm(y, h, 3.0))
    outside = truncate_field(y, TruncationLevel(n=norm * (1 - 1e-15), p=3.0), h)
    assert np.all(outside < y)
    np.testing.assert_array_equal(truncate_field(y, TruncationLevel(n=norm, p=3.0), h), y)


def test_truncate_field_is_phi_n_scaling():
    h = 1.0 / 16
    trunc = TruncationLevel(n=2.0, p=3.0)
    rng = np.random.default_rng(3)
    for amplitude in (0.5, 2.0, 8.0):
        y = amplitude * rng.standard_normal(15)
        scale = phi_n(lp_norm(y, h, 3.0) ** 3.0, trunc)
        np.testing.assert_allclose(truncate_field(y, trunc, h), y * scale, rtol=1e-12)


def test_truncate_field_is_two_lipschitz():
    h = 1.0 / 16
    rng = np.random.default_rng(11)
    for p in (3.0, 5.0):
        trunc = TruncationLevel(n=1.0, p=p)
        y = rng.standard_normal((200, 15)) * rng.uniform(0.1, 5.0, (200, 1))
        z = rng.standard_normal((200, 15)) * rng.uniform(0.1, 5.0, (200, 1))
        lhs = lp_norm(truncate_field(y, trunc, h) - truncate_field(z, trunc, h), h, p)
        assert np.all(lhs <= 2.0 * lp_norm(y - z, h, p) * (1 + 1e-12))


def test_eta_n_is_one_lipschitz_and_continuous():
    n = 2.0
    rng = np.random.default_rng(5)
    x, y = rng.uniform(0.0, 5.0, 1000), rng.uniform(0.0, 5.0, 1000)
    assert np.all(np.abs(eta_n(x, n) - eta_n(y, n)) <= np.abs(x - y) + 1e-15)
    for knot, value in ((n, 1.0), (n + 1.0, 0.0)):
        side = eta_n([knot - 1e-9, knot, knot + 1e-9], n)
        np.testing.assert_allclose(side, value, atol=2e-9)


def test_truncated_nonlinearities_on_the_ramp():
    p_n, c_n = truncated_nonlinearities(2.5, 2.0, 0.5, 1)
    assert float(p_n) == pytest.approx(3.125)
    assert float(c_n) == pytest.approx(-3.75)


def test_model_params_bounds():
    with pytest.raises(PydanticValidationError):
        ModelParams(gamma=1.0)
    with pytest.raises(PydanticValidationError):
        ModelParams(nu=0.0)
    assert ModelParams(alpha=0.0, beta=0.0).min_exponent == 3


def test_truncation_exponent_check():
    with pytest.raises(ValidationError) as exc:
        TruncationLevel(n=1.0, p=3.0).check_exponent(2)
    assert exc.value.field == "p"
    assert TruncationLevel.default(ModelParams(delta=2), n=4.0).p == 5
