"""Three-layer sparsity prior and its linearization."""

import numpy as np
import pytest
from scipy.optimize import brentq

from dyngrid.prior import (
    BgtPrior,
    SlaPoint,
    sla_coefficients,
    sla_precision_vector,
    tanh_penalty,
    zeta_for_snr,
)


def test_constructor_enforces_ratio_regimes():
    base = dict(lam=np.full(4, 0.1), a=1.0, b=1.0, a_bar=1.0, b_bar=1e-5,
                zeta=0.1, c=1e-6, d=1e-6)
    BgtPrior(**base)
    with pytest.raises(ValueError):
        BgtPrior(**{**base, "a": 100.0})        # a/b out of Theta(1)
    with pytest.raises(ValueError):
        BgtPrior(**{**base, "b_bar": 0.5})      # a_bar/b_bar not >> 1
    with pytest.raises(ValueError):
        BgtPrior(**{**base, "zeta": 0.0})
    with pytest.raises(ValueError):
        BgtPrior(**{**base, "zeta": 1.5})
    with pytest.raises(ValueError):
        BgtPrior(**{**base, "lam": np.full(4, 1.5)})


def test_default_prior_regimes():
    p = BgtPrior.default(200, expected_components=8)
    assert 0.1 <= p.a / p.b <= 10
    assert p.a_bar / p.b_bar >= 1e3
    assert np.all(p.lam == 8 / 200)
    # sparsity floor kicks in for tiny K/N
    p2 = BgtPrior.default(10_000, expected_components=1)
    assert np.all(p2.lam == 0.01)


def test_tanh_penalty_endpoints():
    assert tanh_penalty(0.0, 0.3) == 0.0
    assert tanh_penalty(1e6 * 0.3, 0.3) > 1 - 1e-9
    with pytest.raises(ValueError):
        tanh_penalty(1.0, 0.0)
    with pytest.raises(ValueError):
        tanh_penalty(-1.0, 0.5)


def test_tanh_penalty_half_point_via_root_solve():
    zeta = 0.37
    # invert tanh numerically instead of trusting atanh
    z_half = brentq(lambda z: np.tanh(z) - 0.5, 0.0, 5.0)
    assert tanh_penalty(zeta * z_half, zeta) == pytest.approx(0.5, abs=1e-12)


def test_tanh_penalty_monotone(rng):
    zeta = 0.2
    xs = np.sort(rng.uniform(0, 5, size=200))
    vals = np.array([tanh_penalty(float(v), zeta) for v in xs])
    assert np.all(np.diff(vals) >= 0)


def test_sla_at_origin():
    pt = sla_coefficients(np.zeros(5, dtype=complex), 0.1)
    assert np.all(pt.b_hat == 1.0)
    assert np.all(pt.a_hat == 0.0)


def test_sla_saturation_freezes_slope():
    u = np.array([100.0 + 0j])
    pt = sla_coefficients(u, 0.1)
    assert pt.b_hat[0] < 1e-12


def test_sla_tangency_identity(rng):
    u = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    zeta = 0.25
    pt = sla_coefficients(u, zeta)
    z0 = np.abs(u) ** 2 / zeta
    assert np.max(np.abs(pt.a_hat + pt.b_hat * z0 - np.tanh(z0))) < 1e-14
    assert np.all((pt.b_hat >= 0) & (pt.b_hat <= 1))


def test_sla_first_order_accuracy(rng):
    # |tanh(z) - tangent(z)| <= (z - z0)^2 * max|tanh''| on the segment;
    # max |tanh''| over z >= 0 is ~0.77, bound with 1.0 for slack
    u = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    zeta = 0.5
    pt = sla_coefficients(u, zeta)
    z0 = np.abs(u) ** 2 / zeta
    for dz in (0.01, 0.05, 0.1):
        z = z0 + dz
        gap = np.abs(np.tanh(z) - (pt.a_hat + pt.b_hat * z))
        assert np.all(gap <= dz**2 * 1.0 + 1e-15)


def test_tangent_never_exceeds_tanh_above_z0(rng):
    # concavity of tanh on z >= 0: the tangent line is an upper bound
    u = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    zeta = 0.3
    pt = sla_coefficients(u, zeta)
    z = np.linspace(0, 20, 500)[:, None]
    tangent = pt.a_hat[None, :] + pt.b_hat[None, :] * z
    assert np.all(tangent >= np.tanh(z) - 1e-12)


def test_precision_vector_formula(rng):
    rho = rng.uniform(0, 5, size=32)
    u = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    zeta = 0.15
    c = sla_precision_vector(rho, u, zeta)
    ref = rho * (1 - np.tanh(np.abs(u) ** 2 / zeta) ** 2) / zeta
    assert np.max(np.abs(c - ref)) < 1e-14
    assert np.all(c >= 0)


def test_precision_vector_edge_cases():
    rho = np.array([2.0, 0.0, 3.0])
    c = sla_precision_vector(rho, np.zeros(3, dtype=complex), 0.5)
    assert np.allclose(c, rho / 0.5)
    assert c[1] == 0.0


def test_precision_shrinks_when_u_grows(rng):
    # the adaptivity claim: growing |u| with rho fixed never raises c
    rho = rng.uniform(0.5, 2.0, size=16)
    zeta = 0.2
    u1 = rng.uniform(0.1, 1.0, size=16).astype(complex)
    u2 = u1 * 2.0
    c1 = sla_precision_vector(rho, u1, zeta)
    c2 = sla_precision_vector(rho, u2, zeta)
    assert np.all(c2 <= c1 + 1e-15)


def test_sharper_than_gaussian_ratio():
    # unnormalized tanh prior exp(-rho tanh(|x|^2/zeta)) against the Gaussian
    # with matched curvature at 0, exp(-rho |x|^2 / zeta): the ratio grows
    # with |x|^2 and exceeds 1 away from the origin (heavier shoulders)
    rho, zeta = 20.0, 0.1
    xsq = np.linspace(0, 1.0, 50)
    log_ratio = rho * (xsq / zeta - np.tanh(xsq / zeta))
    assert np.all(np.diff(log_ratio) >= 0)
    assert log_ratio[-1] > 0


def test_zeta_for_snr_monotone_and_clamped():
    snrs = [-10, 0, 10, 20, 40, 60]
    vals = [zeta_for_snr(s) for s in snrs]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert vals[0] == 1.0
    assert vals[-1] == 0.01
    assert zeta_for_snr(20) == pytest.approx(0.1)


def test_slapoint_fields_align():
    pt = sla_coefficients(np.array([0.3 + 0.4j]), 0.1)
    assert isinstance(pt, SlaPoint)
    assert pt.u_hat.shape == pt.a_hat.shape == pt.b_hat.shape
