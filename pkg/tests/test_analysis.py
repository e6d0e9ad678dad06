import mpmath as mp
import numpy as np
import pytest

from sgbh.core.exceptions import InsufficientSamplesError, ValidationError
from sgbh.schemas.fields import FieldPath
from sgbh.schemas.solver import PicardConfig
from sgbh.services.analysis_service import (
    bandwidth_stability,
    embedding_constant,
    energy_constants,
    energy_inequality_check,
    fractional_seminorm,
    kde_density,
    nondegeneracy_check,
    poincare_ratio,
    sup_norm_bound,
)
from sgbh.services.integrations.presets import ConstantNoise, LipschitzSinNoise, SwitchNoise, ZeroNoise
from sgbh.services.solver_service import MildSolver


def constants_mp(p, d, alpha, beta, gamma, nu):
    mp.mp.dps = 40
    p, alpha, beta, gamma, nu = (mp.mpf(v) for v in (p, alpha, beta, gamma, nu))
    q = p + 2 * d
    adv = 2 ** d * (p - 1) ** 2 * alpha ** 2 / nu
    brace = adv / 4 + 4 ** d * beta * (1 + gamma) ** 2 + 2 ** d * beta * (1 + gamma) \
        + mp.mpf(2) ** (2 * d - 1) * beta * (2 * d + 1)
    K1 = (2 * d / q) * mp.power(8 * p / q, p / (2 * d)) * mp.power(brace, q / (2 * d))
    K2 = 2 ** d * beta * (1 + gamma) / p * mp.power((p - 1) / p, p - 1) \
        + adv / p * mp.power(2 * (p - 2) / p, 2 / (p - 2))
    K3 = (mp.power(4 * (q - 1) / (beta * q), q - 1) * mp.power(mp.mpf(2) ** (2 * d - 1) * beta * (2 * d + 1), q)
          + 2 * mp.power(4 * (q - 2) / (beta * q), (q - 2) / 2) * mp.power(adv / 2, q / 2)) / q
    return K1, K2, K3


@pytest.mark.parametrize("p,delta", [(3.0, 1), (5.0, 2), (4.5, 1)])
def test_energy_constants_match_high_precision(p, delta):
    got = energy_constants(p, delta, 0.5, 0.7, 0.3, 1.2)
    for value, reference in zip(got, constants_mp(p, delta, 0.5, 0.7, 0.3, 1.2)):
        assert value == pytest.approx(float(reference), rel=1e-10)


def test_energy_constants_rejections():
    with pytest.raises(ValidationError):
        energy_constants(2.5, 1, 0.5, 0.5, 0.5, 1.0)
    with pytest.raises(ValidationError):
        energy_constants(3.0, 1, 0.5, 0.0, 0.5, 1.0)


def test_energy_inequality_holds_along_a_path(params, tgrid, sgrid, sheet, trunc, sine_u0):
    solver = MildSolver(params, tgrid, sgrid, LipschitzSinNoise(0.2))
    u, _ = solver.picard_solve(sine_u0, sheet, PicardConfig(trunc=trunc))
    phi = solver.stochastic_convolution(sheet, u, trunc=trunc)
    v = FieldPath(values=u.values - phi.values, u0=u.u0, tgrid=tgrid, sgrid=sgrid, scheme="v")
    report = energy_inequality_check(v, phi, params, 3.0)
    assert len(report.lhs) == tgrid.N + 1
    assert report.lhs[0] == pytest.approx(sgrid.h * np.sum(np.abs(sine_u0) ** 3))
    assert report.min_margin > 0


def test_kde_of_normal_samples():
    samples = np.random.default_rng(1).standard_normal(20000)
    estimate = kde_density(samples)
    assert not estimate.atom_detected
    assert len(estimate.grid) == 2048
    assert abs(estimate.integral - 1.0) < 1e-6
    assert estimate.bandwidth_sensitivity < 0.2
    peak = estimate.grid[int(np.argmax(estimate.density))]
    assert abs(peak) < 0.2


def test_kde_flags_atoms():
    estimate = kde_density(np.full(300, 0.3))
    assert estimate.atom_detected
    assert estimate.variance == 0.0
    assert estimate.density == []
    with pytest.raises(ValidationError):
        kde_density(np.full(300, 0.3), require_density=True)


def test_kde_needs_enough_samples():
    with pytest.raises(InsufficientSamplesError):
        kde_density(np.arange(50.0))


def test_fractional_seminorm():
    assert fractional_seminorm(np.ones(15), 0.5, 3.0) == 0.0
    f = np.sin(np.pi * np.arange(1, 16) / 16)
    assert fractional_seminorm(f, 0.5, 3.0) > 0
    with pytest.raises(ValidationError):
        fractional_seminorm(f, 0.5, 1.5)
    bound = sup_norm_bound(f, 0.5, 3.0)
    assert bound["sup"] == pytest.approx(1.0)
    assert bound["ratio"] > 0
    assert sup_norm_bound(np.zeros(15), 0.5, 3.0)["ratio"] is None


def test_bandwidth_stability_separates_smooth_and_clustered_samples():
    rng = np.random.default_rng(2)
    smooth = bandwidth_stability(rng.standard_normal(20000))
    assert smooth["stable"] and smooth["sensitivity"] < 0.2
    clusters = np.concatenate([3.0 + 0.01 * rng.standard_normal(200), -3.0 + 0.01 * rng.standard_normal(200)])
    coarse = bandwidth_stability(clusters, bandwidth=2.0)
    assert not coarse["stable"]
    assert coarse["sensitivity"] > 0.5
    assert coarse["bandwidth"] == 2.0
    with pytest.raises(InsufficientSamplesError):
        bandwidth_stability(np.arange(50.0))


def test_kde_reports_the_stability_sensitivity():
    samples = np.random.default_rng(4).standard_normal(500)
    estimate = kde_density(samples)
    assert estimate.bandwidth_sensitivity == pytest.approx(bandwidth_stability(samples)["sensitivity"])


def test_sup_norm_embedding_bound():
    assert embedding_constant(0.5, 3.0) == pytest.approx(8 * 4 ** (1 / 3) * 2.5 / 0.5)
    with pytest.raises(ValidationError):
        embedding_constant(0.0, 3.0)
    for k in (1, 2, 5):
        f = np.sin(k * np.pi * np.arange(1, 16) / 16)
        bound = sup_norm_bound(f, 0.5, 3.0)
        assert bound["holds"]
        assert bound["sup"] <= bound["bound"]
        assert bound["bound"] == pytest.approx(embedding_constant(0.5, 3.0) * bound["seminorm"] ** (1 / 3))
    zero = sup_norm_bound(np.zeros(15), 0.5, 3.0)
    assert zero["holds"] and zero["bound"] == 0.0


def test_poincare_ratio_on_first_mode(tgrid, sgrid):
    s = np.sin(np.pi * sgrid.nodes)
    path = FieldPath(values=np.vstack([s, 0.5 * s, np.zeros(sgrid.m)]), u0=s, tgrid=tgrid, sgrid=sgrid, scheme="test")
    result = poincare_ratio(path)
    assert result["holds"]
    np.testing.assert_allclose(result["ratios"][:2], result["floor"], rtol=1e-10)
    assert np.isnan(result["ratios"][2])
    assert result["floor"] < np.pi ** 2


def test_nondegeneracy(sgrid, sine_u0):
    assert not nondegeneracy_check(ZeroNoise(), sine_u0, sgrid.nodes)["nondegenerate"]
    assert nondegeneracy_check(ConstantNoise(0.1), sine_u0, sgrid.nodes)["max_abs"] == pytest.approx(0.1)
    switch = SwitchNoise(0.2, 0.25)
    assert not nondegeneracy_check(switch, sine_u0, sgrid.nodes, t=0.0)["nondegenerate"]
    assert nondegeneracy_check(switch, sine_u0, sgrid.nodes, t=0.3)["nondegenerate"]
