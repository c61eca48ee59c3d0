import numpy as np
import pytest

from atriafit.errors import DivergenceError, InvertedElementError
from atriafit.material import (
    GreenLagrangeStrain,
    GuccioneParams,
    NeoHookeanParams,
    green_lagrange_from_F,
    guccione_energy,
    guccione_stress,
    neohookean_energy,
)

# oracle values from direct evaluation of the closed forms
PSI_ALPHA1 = 0.85 * np.expm1(0.08)  # 0.0707940075
PSI_ALPHA2 = 0.85 * np.expm1(0.16)  # 0.1474842403
S_FF_ALPHA1 = 1.7 * 8.0 * 0.1 * np.exp(0.08)  # 1.4732704120


def test_identity_strain():
    E = green_lagrange_from_F(np.eye(2))
    assert np.all(E.as_matrix() == 0.0)
    assert E.J == 1.0


def test_uniaxial_stretch_with_thickness_flag():
    E = green_lagrange_from_F(np.diag([1.1, 1.0]), incompressible_thickness=True)
    assert E.E_ff == pytest.approx(0.105, abs=1e-12)
    assert E.E_nn == pytest.approx(-0.0867768595, abs=1e-9)
    assert E.J == 1.0


def test_uniaxial_stretch_without_flag():
    E = green_lagrange_from_F(np.diag([1.1, 1.0]), incompressible_thickness=False)
    assert E.E_nn == 0.0
    assert E.J == pytest.approx(1.1)


def test_pure_shear():
    E = green_lagrange_from_F(np.array([[1.0, 0.1], [0.0, 1.0]]))
    assert E.E_fs == pytest.approx(0.05, abs=1e-14)
    assert E.E_ss == pytest.approx(0.005, abs=1e-14)
    assert E.E_ff == 0.0
    assert E.E_fn == 0.0 and E.E_sn == 0.0


def test_inverted_F_rejected():
    with pytest.raises(InvertedElementError):
        green_lagrange_from_F(np.diag([1.0, -1.0]))


def test_rest_energy_zero():
    assert guccione_energy(GreenLagrangeStrain(), GuccioneParams()) == 0.0


def test_energy_fibre_strain():
    E = GreenLagrangeStrain(E_ff=0.1)
    assert guccione_energy(E, GuccioneParams(C=1.7, alpha=1.0, b_f=8.0)) == pytest.approx(PSI_ALPHA1, abs=1e-12)
    assert guccione_energy(E, GuccioneParams(C=1.7, alpha=2.0, b_f=8.0)) == pytest.approx(PSI_ALPHA2, abs=1e-12)


def test_stress_fibre_strain():
    S = guccione_stress(GreenLagrangeStrain(E_ff=0.1), GuccioneParams(C=1.7, alpha=1.0, b_f=8.0))
    assert S[0, 0] == pytest.approx(S_FF_ALPHA1, abs=1e-10)
    assert np.count_nonzero(S) == 1


def test_zero_strain_zero_stress():
    assert np.all(guccione_stress(GreenLagrangeStrain(), GuccioneParams()) == 0.0)


def test_overflow_cap():
    with pytest.raises(DivergenceError):
        guccione_energy(GreenLagrangeStrain(E_ff=3.0), GuccioneParams(alpha=4.0))


COMPONENTS = ("E_ff", "E_ss", "E_nn", "E_fs", "E_fn", "E_sn")
INDEX = {"E_ff": (0, 0), "E_ss": (1, 1), "E_nn": (2, 2), "E_fs": (0, 1), "E_fn": (0, 2), "E_sn": (1, 2)}


def test_stress_matches_finite_differences():
    rng = np.random.default_rng(7)
    p = GuccioneParams(C=1.7, alpha=1.3)
    h = 1e-6
    worst = 0.0
    for _ in range(100):
        vals = dict(zip(COMPONENTS, rng.uniform(-0.3, 0.3, 6)))
        S = guccione_stress(GreenLagrangeStrain(**vals), p)
        for c in COMPONENTS:
            up = dict(vals, **{c: vals[c] + h})
            dn = dict(vals, **{c: vals[c] - h})
            fd = (guccione_energy(GreenLagrangeStrain(**up), p) - guccione_energy(GreenLagrangeStrain(**dn), p)) / (2 * h)
            i, j = INDEX[c]
            analytic = S[i, j] * (1.0 if i == j else 2.0)  # off-diagonals appear twice in the tensor
            worst = max(worst, abs(fd - analytic) / max(abs(analytic), 1e-8))
    assert worst < 1e-6


def test_neohookean_examples():
    assert neohookean_energy(3.0, 1.0, NeoHookeanParams(c=7.45)) == 0.0
    assert neohookean_energy(3.3, 1.0, NeoHookeanParams(c=7.45)) == pytest.approx(2.235, abs=1e-12)
    assert neohookean_energy(3.0, np.e, NeoHookeanParams(c=1.0, kappa=1000.0)) == pytest.approx(500.0, abs=1e-9)


def test_neohookean_inverted():
    with pytest.raises(InvertedElementError):
        neohookean_energy(3.0, 0.0, NeoHookeanParams())


def test_energy_monotone_in_alpha_and_C():
    E = GreenLagrangeStrain(E_ff=0.05, E_ss=-0.02, E_fs=0.03)
    a = [guccione_energy(E, GuccioneParams(alpha=v)) for v in (0.5, 1.0, 2.0, 4.0)]
    c = [guccione_energy(E, GuccioneParams(C=v)) for v in (0.5, 1.0, 2.0, 4.0)]
    assert np.all(np.diff(a) > 0) and np.all(np.diff(c) > 0)


def test_frame_invariance():
    rng = np.random.default_rng(3)
    p = GuccioneParams()
    for _ in range(20):
        F = np.eye(2) + rng.uniform(-0.15, 0.15, (2, 2))
        th = rng.uniform(0, 2 * np.pi)
        Rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        # rotating the spatial frame leaves F^T F unchanged
        e1 = guccione_energy(green_lagrange_from_F(F), p)
        e2 = guccione_energy(green_lagrange_from_F(Rot @ F), p)
        assert e2 == pytest.approx(e1, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("kw", [dict(C=0.0), dict(alpha=-1.0), dict(b_f=0.0), dict(kappa=-1.0)])
def test_invalid_params(kw):
    with pytest.raises(ValueError):
        GuccioneParams(**kw)
