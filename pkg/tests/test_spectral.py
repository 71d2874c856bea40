import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tbc.errors import CharacteristicBoundaryError, NearCircleError
from tbc.scheme import PRESETS, SchemeDef, boundary_symbol_a
from tbc.spectral import (
    _schur_projector,
    companion_M,
    projector_at_infinity,
    split_spectrum,
    stable_projector_batch,
    stable_projector_vandermonde,
)

SCHEMES = {
    "lax_wendroff": PRESETS["lax_wendroff"](0.5),
    "leap_frog": PRESETS["leap_frog"](0.5),
    "heat_bdf2": PRESETS["heat_bdf2"](1.0),
    "cn_schrodinger": PRESETS["cn_schrodinger"](0.5, 0.5),
    "cn_airy": PRESETS["cn_airy"](0.5),
    "cn_bbm": PRESETS["cn_bbm"](1.0, 1.0, 0.01, 0.1),
}

outside = st.builds(
    lambda m, t: m * np.exp(1j * t),
    st.floats(1.01, 10),
    st.floats(0, 2 * np.pi),
)


@settings(max_examples=40)
@given(name=st.sampled_from(sorted(SCHEMES)), z=outside)
def test_projector_is_spectral_projector(name, z):
    sch = SCHEMES[name]
    comp = companion_M(sch, z)
    split = split_spectrum(comp)
    P = split.pi_s
    n = sch.p + sch.r
    assert len(split.stable) == sch.r and len(split.unstable) == sch.p
    assert np.linalg.norm(P @ P - P) <= 1e-9 * np.linalg.norm(P) ** 2
    assert np.linalg.norm(P @ comp.matrix - comp.matrix @ P) <= 1e-9 * np.linalg.norm(P) * np.linalg.norm(comp.matrix)
    assert round(np.trace(P).real) == sch.r
    for kappa, _ in split.stable:
        v = kappa ** np.arange(n - 1, -1, -1)
        assert np.linalg.norm(P @ v - v) <= 1e-8 * np.linalg.norm(P) * np.linalg.norm(v)


@settings(max_examples=40)
@given(name=st.sampled_from(sorted(SCHEMES)), z=outside)
def test_determinant_identity(name, z):
    sch = SCHEMES[name]
    M = companion_M(sch, z).matrix
    a_lo = boundary_symbol_a(sch, -sch.r, z)
    a_hi = boundary_symbol_a(sch, sch.p, z)
    expected = (-1) ** (sch.p + sch.r) * a_lo / a_hi
    assert np.linalg.det(M) == pytest.approx(expected, rel=1e-10)


@settings(max_examples=40)
@given(name=st.sampled_from(sorted(SCHEMES)), z=outside)
def test_vandermonde_and_schur_routes_agree(name, z):
    sch = SCHEMES[name]
    comp = companion_M(sch, z)
    split = split_spectrum(comp)
    stable = [k for k, _ in split.stable]
    unstable = [k for k, _ in split.unstable]
    P_v = stable_projector_vandermonde(stable, unstable)
    P_s = _schur_projector(comp.matrix, sch.r)
    assert np.linalg.norm(P_v - P_s) <= 1e-8 * max(1.0, np.linalg.norm(P_v))


def test_batch_matches_pointwise():
    sch = SCHEMES["cn_airy"]
    zs = 1.5 * np.exp(2j * np.pi * np.arange(16) / 16)
    batch = stable_projector_batch(sch, zs)
    for z, P in zip(zs, batch):
        np.testing.assert_allclose(P, split_spectrum(companion_M(sch, z)).pi_s, atol=1e-11)


def test_unit_circle_root_raises():
    # kappa = 1 solves the Lax-Wendroff dispersion relation at z = 1
    with pytest.raises(NearCircleError):
        split_spectrum(companion_M(SCHEMES["lax_wendroff"], 1.0))


def test_vanishing_leading_symbol_raises():
    sch = SchemeDef.from_entries(0, 1, 1, {(-1, 0): 1.0, (0, 1): 1.0, (1, 0): 0.0})
    with pytest.raises(CharacteristicBoundaryError):
        companion_M(sch, 2.0)


@pytest.mark.parametrize("name", ["lax_wendroff", "leap_frog"])
def test_explicit_projector_at_infinity(name):
    P = projector_at_infinity(SCHEMES[name])
    np.testing.assert_array_equal(P, np.diag([0, 1]).astype(complex))


def test_bdf2_projector_at_infinity_stable_root():
    # level-2 symbol: -kappa^2 + 3.5 kappa - 1 = 0, stable root (3.5 - sqrt(8.25)) / 2
    split = split_spectrum(companion_M(SCHEMES["heat_bdf2"], 1e12))
    assert split.stable[0][0] == pytest.approx((3.5 - np.sqrt(8.25)) / 2, abs=1e-10)
