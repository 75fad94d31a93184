import numpy as np
import pytest

from nsmpb.kernels import (
    KernelContext,
    SingularityError,
    eval_G,
    eval_g_gamma,
    eval_gradG,
    eval_Ghat,
    eval_gradGhat,
)
from nsmpb.pqr import Atom, Molecule

ALPHA = 7042.93990033
PREF = ALPHA / (8 * np.pi)


def unit_ctx(lam=15.0, eps_p=2.0):
    return KernelContext(Molecule.single_ion(1.0), ALPHA, eps_p, lam)


def dipole_ctx(lam=15.0):
    mol = Molecule([Atom((-1.0, 0.3, 0.2), 1.0, 1.0), Atom((1.5, -0.4, 0.7), -0.6, 1.0),
                    Atom((0.2, 1.1, -0.9), 0.35, 1.0)])
    return KernelContext(mol, ALPHA, 2.0, lam)


def test_G_unit_charge():
    g = eval_G(unit_ctx(), [[10.0, 0.0, 0.0]])[0]
    assert g == pytest.approx(PREF / 10, rel=1e-14)
    # printed reference value is rounded one digit off
    assert g == pytest.approx(28.0231, rel=2e-5)


def test_G_antisymmetric_pair_vanishes_on_bisector():
    mol = Molecule([Atom((-1.0, 0.0, 0.0), 1.0, 1.0), Atom((1.0, 0.0, 0.0), -1.0, 1.0)])
    ctx = KernelContext(mol, ALPHA, 2.0, 15.0)
    pts = np.array([[0.0, 1.0, 2.0], [0.0, -3.0, 0.5], [0.0, 0.0, 7.0]])
    assert np.allclose(eval_G(ctx, pts), 0.0, atol=1e-12)
    assert np.allclose(eval_Ghat(ctx, pts), 0.0, atol=1e-12)


def test_G_at_center_raises():
    with pytest.raises(SingularityError):
        eval_G(unit_ctx(), [[0.0, 0.0, 0.0]])
    with pytest.raises(SingularityError):
        eval_gradG(unit_ctx(), [[0.0, 0.0, 0.0]])


def test_gradG_unit_charge():
    g = eval_gradG(unit_ctx(), [[10.0, 0.0, 0.0]])[0]
    assert np.allclose(g, [-PREF / 100, 0.0, 0.0], rtol=1e-14, atol=0)
    assert g[0] == pytest.approx(-2.80231, rel=2e-5)


def test_Ghat_unit_charge():
    g = eval_Ghat(unit_ctx(), [[10.0, 0.0, 0.0]])[0]
    assert g == pytest.approx(PREF / 10 * -np.expm1(-10 / 15), rel=1e-14)
    assert g == pytest.approx(13.6353, rel=2e-5)


def test_Ghat_center_limit():
    limit = ALPHA / (4 * np.pi * 2.0) / 15.0
    assert limit == pytest.approx(18.682, abs=5e-4)
    ctx = unit_ctx()
    assert eval_Ghat(ctx, [[0.0, 0.0, 0.0]])[0] == pytest.approx(limit, rel=1e-14)
    assert eval_Ghat(ctx, [[1e-6, 0.0, 0.0]])[0] == pytest.approx(limit, rel=1e-7)


def test_Ghat_series_and_closed_form_agree_across_switch():
    ctx = unit_ctx()
    r = np.array([0.99e-2, 1.01e-2]) * 15.0
    pts = np.column_stack([r, np.zeros(2), np.zeros(2)])
    exact = ALPHA / (4 * np.pi * 2.0) * (-np.expm1(-r / 15.0)) / r
    assert np.allclose(eval_Ghat(ctx, pts), exact, rtol=1e-13)


def test_Ghat_large_lambda_vanishes():
    ctx = unit_ctx(lam=1e9)
    p = [[10.0, 0.0, 0.0]]
    assert abs(eval_Ghat(ctx, p)[0]) < 1e-6 * abs(eval_G(ctx, p)[0])


def test_gradGhat_small_lambda_tends_to_gradG():
    ctx = unit_ctx(lam=1e-3)
    p = [[10.0, 0.0, 0.0]]
    gh, g = eval_gradGhat(ctx, p)[0], eval_gradG(ctx, p)[0]
    assert np.linalg.norm(gh - g) < 1e-4 * np.linalg.norm(g)


def test_gradGhat_center_value():
    # the radial factor tends to -1/(2 lam^2), so the gradient is bounded but
    # direction dependent near the center and zero exactly at it
    ctx = unit_ctx()
    pref = ALPHA / (4 * np.pi * 2.0)
    g = eval_gradGhat(ctx, [[1e-6, 0.0, 0.0]])[0]
    assert g[0] == pytest.approx(-pref / (2 * 15.0**2), rel=1e-6)
    assert np.array_equal(eval_gradGhat(ctx, [[0.0, 0.0, 0.0]])[0], np.zeros(3))


@pytest.mark.parametrize("evaluate,grad", [(eval_G, eval_gradG), (eval_Ghat, eval_gradGhat)])
def test_gradients_match_finite_differences(evaluate, grad, rng):
    ctx = dipole_ctx()
    pts = rng.uniform(-6, 6, (20, 3)) + np.array([0.0, 0.0, 8.0])
    h = 1e-5
    fd = np.column_stack([(evaluate(ctx, pts + h * e) - evaluate(ctx, pts - h * e)) / (2 * h)
                          for e in np.eye(3)])
    assert np.allclose(grad(ctx, pts), fd, rtol=1e-6, atol=1e-8)


def test_linear_in_charges():
    ctx = dipole_ctx()
    scaled = KernelContext(ctx.molecule.scaled(-2.5), ALPHA, 2.0, 15.0)
    pts = np.array([[3.0, 4.0, 5.0], [-7.0, 0.5, 2.0]])
    for f in (eval_G, eval_Ghat, eval_gradG, eval_gradGhat):
        assert np.allclose(f(scaled, pts), -2.5 * f(ctx, pts), rtol=1e-13)


def test_g_gamma_local_reduction():
    ctx = unit_ctx()
    p, n = np.array([[5.0, 0.0, 0.0]]), np.array([[1.0, 0.0, 0.0]])
    dG = eval_gradG(ctx, p)[0, 0]
    assert eval_g_gamma(ctx, 80.0, 80.0, p, n)[0] == pytest.approx((80.0 - 2.0) * dG, rel=1e-14)


def test_g_gamma_small_lambda_with_eps_inf_eq_eps_p():
    ctx = unit_ctx(lam=1e-3)
    p, n = np.array([[5.0, 0.0, 0.0]]), np.array([[1.0, 0.0, 0.0]])
    dG = eval_gradG(ctx, p)[0, 0]
    assert eval_g_gamma(ctx, 80.0, 2.0, p, n)[0] == pytest.approx(78.0 * dG, rel=1e-8)


def test_g_gamma_sphere_point():
    # independent scalar evaluation of the two normal derivatives at r = 5
    ctx = unit_ctx()
    r, lam = 5.0, 15.0
    pref = ALPHA / (4 * np.pi * 2.0)
    dG = -pref / r**2
    dGhat = pref * ((1 + r / lam) * np.exp(-r / lam) - 1) / r**2
    expected = (80.0 - 1.8) * dGhat + (1.8 - 2.0) * dG
    got = eval_g_gamma(ctx, 80.0, 1.8, [[5.0, 0.0, 0.0]], [[1.0, 0.0, 0.0]])[0]
    assert got == pytest.approx(expected, rel=1e-10)


def test_context_validation():
    with pytest.raises(ValueError):
        KernelContext(Molecule.single_ion(), ALPHA, 2.0, 0.0)
