from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pfxfem.material import (
    Material,
    degradation,
    macaulay,
    spectral_split,
    split_energy_voigt,
    stress,
    update_history,
)

MAT = Material(E=20.0, nu=0.3, Gc=2.7e-3, l=0.01)
finite = st.floats(-1e3, 1e3, allow_nan=False)
strain_entry = st.floats(-1e-2, 1e-2, allow_nan=False)


def _tensor(a, b, c):
    return np.array([[a, c], [c, b]])


def test_lame_parameters_plane_strain():
    E, nu = MAT.E, MAT.nu
    assert MAT.lam == pytest.approx(E * nu / ((1 + nu) * (1 - 2 * nu)))
    assert MAT.mu == pytest.approx(E / (2 * (1 + nu)))


@pytest.mark.parametrize("kw", [dict(E=0), dict(nu=0.5), dict(nu=-0.1), dict(Gc=0), dict(l=-1), dict(E=float("nan"))])
def test_material_rejects(kw):
    base = dict(E=1.0, nu=0.3, Gc=1.0, l=1.0)
    base.update(kw)
    with pytest.raises(ValueError):
        Material(**base)


@pytest.mark.parametrize("x,out", [(3, (3, 0)), (-3, (0, -3)), (0, (0, 0))])
def test_macaulay_examples(x, out):
    assert tuple(macaulay(x)) == out


@given(finite)
def test_macaulay_properties(x):
    p, m = macaulay(x)
    assert p * m == 0
    assert p + m == x


def test_split_examples():
    e = 1e-3
    lam, mu = MAT.lam, MAT.mu
    assert spectral_split(np.zeros((2, 2)), MAT).psi_plus == 0
    s = spectral_split(np.diag([e, e]), MAT)
    assert s.psi_plus == pytest.approx(2 * lam * e**2 + 2 * mu * e**2, rel=1e-12)
    assert s.psi_minus == 0
    assert spectral_split(np.diag([-e, -e]), MAT).psi_plus == 0


def test_split_rejects_non_symmetric():
    with pytest.raises(ValueError):
        spectral_split(np.array([[0.0, 1e-3], [0.0, 0.0]]), MAT)


@given(strain_entry, strain_entry, strain_entry, st.floats(0, 2 * np.pi))
def test_split_isotropic(a, b, c, theta):
    eps = _tensor(a, b, c)
    Q = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    s1 = spectral_split(eps, MAT)
    s2 = spectral_split(Q @ eps @ Q.T, MAT)
    scale = max(s1.psi_plus + s1.psi_minus, 1e-30)
    assert abs(s1.psi_plus - s2.psi_plus) <= 1e-10 * scale
    assert abs(s1.psi_minus - s2.psi_minus) <= 1e-10 * scale
    assert s1.psi_plus >= 0 and s1.psi_minus >= 0


@given(st.floats(0, 1e-2), st.floats(0, 1e-2), st.floats(0, 1))
def test_split_uniform_sign(e1, e2, theta):
    Q = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    eps = Q @ np.diag([e1, e2]) @ Q.T
    eps = 0.5 * (eps + eps.T)
    v = np.array([eps[0, 0], eps[1, 1], 2 * eps[0, 1]])
    full = 0.5 * v @ MAT.D @ v
    s = spectral_split(eps, MAT)
    assert s.psi_plus == pytest.approx(full, rel=1e-10, abs=1e-300)
    assert s.psi_minus <= 1e-10 * full
    s = spectral_split(-eps, MAT)
    assert s.psi_minus == pytest.approx(full, rel=1e-10, abs=1e-300)
    assert s.psi_plus <= 1e-10 * full


def test_degradation_examples():
    from pfxfem.material import SplitEnergy

    assert degradation(0.0, SplitEnergy(1.0, 0.0)) == 1
    assert degradation(1.0, SplitEnergy(1.0, 0.5)) == 0
    assert degradation(0.9, SplitEnergy(0.1, 0.5)) == 1
    assert degradation(1.2, SplitEnergy(1.0, 0.0)) == 0  # clamped
    assert degradation(-0.1, SplitEnergy(1.0, 0.0)) == 1


def test_stress_examples():
    e = 1e-3
    eps = np.diag([e, 0.0])
    se = spectral_split(eps, MAT)
    sig = stress(eps, 0.0, se, MAT)
    lam, mu = MAT.lam, MAT.mu
    assert np.allclose(sig, [[lam * e + 2 * mu * e, 0], [0, lam * e]], rtol=1e-12)
    assert np.all(stress(eps, 1.0, se, MAT) == 0)
    assert np.all(stress(np.zeros((2, 2)), 0.0, spectral_split(np.zeros((2, 2)), MAT), MAT) == 0)


def test_stress_matches_elasticity_matrix():
    rng = np.random.default_rng(0)
    for a, b, c in rng.uniform(-1e-2, 1e-2, (1000, 3)):
        eps = _tensor(a, b, c)
        sig = stress(eps, 0.0, spectral_split(eps, MAT), MAT)
        v = MAT.D @ np.array([a, b, 2 * c])
        ref = np.array([[v[0], v[2]], [v[2], v[1]]])
        assert np.allclose(sig, ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())


def test_update_history_examples():
    assert update_history(0, 0) == 0
    assert update_history(5, 3) == 5
    assert update_history(2, 7) == 7


@given(st.floats(0, 1e3), st.floats(0, 1e3))
def test_update_history_monotone_idempotent(h, p):
    once = update_history(h, p)
    assert once >= h
    assert update_history(once, p) == once


def test_voigt_split_vectorized_matches_scalar():
    rng = np.random.default_rng(1)
    eps = rng.uniform(-1e-2, 1e-2, (50, 3))
    pp, pm = split_energy_voigt(eps, MAT)
    for k, (a, b, g) in enumerate(eps):
        s = spectral_split(_tensor(a, b, g / 2), MAT)
        assert pp[k] == pytest.approx(s.psi_plus)
        assert pm[k] == pytest.approx(s.psi_minus)
