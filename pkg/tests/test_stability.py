import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tbc.errors import AssumptionViolationError, NearCircleError, ParameterError
from tbc.scheme import PRESETS, dispersion_F
from tbc.spectral import stable_projector
from tbc.stability import (
    detect_glancing,
    dispersion_eigencurves,
    optimal_forcing_profile,
    resolvent_solve,
    trace_bound_constant,
    ukl_extension_check,
)

LW = PRESETS["lax_wendroff"](0.5)
LF = PRESETS["leap_frog"](0.5)


@settings(max_examples=30, deadline=None)
@given(
    name=st.sampled_from(["lax_wendroff", "leap_frog", "heat_bdf2", "cn_airy"]),
    m=st.floats(1.05, 5),
    t=st.floats(0, 2 * np.pi),
    seed=st.integers(0, 2**16),
)
def test_resolvent_residuals(name, m, t, seed):
    sch = PRESETS[name](0.5)
    z = m * np.exp(1j * t)
    rng = np.random.default_rng(seed)
    F = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    P = stable_projector(sch, z)
    G = P @ (rng.standard_normal(sch.p + sch.r) + 0j)
    sol = resolvent_solve(sch, z, F=F, G=G)
    scale = 1 + np.linalg.norm(F) + np.linalg.norm(G)
    assert sol.residual_interior <= 1e-10 * scale
    assert sol.residual_boundary <= 1e-10 * scale


def test_resolvent_rejects_unit_circle():
    with pytest.raises(NearCircleError):
        resolvent_solve(LW, 1.0, F=np.ones(3))


def test_resolvent_rejects_g_outside_range():
    z = 2.0
    P = stable_projector(LW, z)
    G = (np.eye(2) - P) @ np.array([1.0, 0.3])
    with pytest.raises(ParameterError):
        resolvent_solve(LW, z, G=G)


def test_lax_wendroff_trace_constant_bounded():
    F = np.zeros(10, dtype=complex)
    F[3] = 1
    consts = [trace_bound_constant(LW, m, F) for m in (2.0, 1.1, 1.01, 1.001)]
    assert max(consts) < 1.0


def test_eigencurves_lie_on_dispersion_relation():
    xi = np.linspace(0, 2 * np.pi, 65)
    curves = dispersion_eigencurves(LF, xi)
    for b in np.asarray(curves.branches).T:
        assert np.max(np.abs(dispersion_F(LF, np.exp(1j * xi), b))) < 1e-12


def test_eigencurves_reject_unstable():
    with pytest.warns(UserWarning):
        sch = PRESETS["lax_wendroff"](1.5)
    with pytest.raises(AssumptionViolationError):
        dispersion_eigencurves(sch, np.linspace(0, 2 * np.pi, 33))


def test_leap_frog_glancing_values():
    report = detect_glancing(LF)
    assert report.classification == "glancing"
    zs = sorted((round(f.xi, 6), round(f.z.real, 9), round(f.z.imag, 9)) for f in report.findings)
    c = round(np.sqrt(0.75), 9)
    assert zs == sorted([
        (round(np.pi / 2, 6), c, 0.5), (round(np.pi / 2, 6), -c, 0.5),
        (round(3 * np.pi / 2, 6), c, -0.5), (round(3 * np.pi / 2, 6), -c, -0.5),
    ])


@pytest.mark.parametrize(
    "sch, xis",
    [
        (PRESETS["cn_schrodinger"](0.5, 0.5), [0.0, np.pi]),
        (PRESETS["heat_bdf2"](1.0), [0.0]),
    ],
    ids=["schrodinger", "bdf2"],
)
def test_glancing_frequencies(sch, xis):
    report = detect_glancing(sch)
    found = sorted({round(f.xi, 6) for f in report.findings})
    assert found == sorted(round(x, 6) for x in xis)


def test_bbm_non_glancing():
    assert detect_glancing(PRESETS["cn_bbm"](1.0, 1.0, 0.01, 0.1)).classification == "non-glancing"


def test_frequency_domain_dichotomy():
    z_lf = complex(np.sqrt(0.75), 0.5)
    ladder = [(1.0, 20), (0.1, 100), (0.01, 400), (0.001, 400)]
    lf = [optimal_forcing_profile(LF, z_lf, g, w)[1] for g, w in ladder]
    lw = [optimal_forcing_profile(LW, 1.0 + 0j, g, w)[1] for g, w in ladder]
    assert lf[-1] / lf[0] > 3
    assert max(lw) < 3 * lw[0]


def test_ukl_lax_wendroff_converges():
    report = ukl_extension_check(LW, theta_grid=np.linspace(0, 2 * np.pi, 16, endpoint=False))
    assert not report.singular_thetas
    assert all(pt.status == "converged" for pt in report.points)


def test_ukl_leap_frog_singular_at_glancing():
    thetas = np.array([np.pi / 6, np.pi / 2 + 0.3, 5 * np.pi / 6])
    report = ukl_extension_check(LF, theta_grid=thetas)
    status = [pt.status for pt in report.points]
    assert status[0] == "singular" and status[2] == "singular"
    assert status[1] == "converged"
    assert report.glancing_consistent


def test_ukl_needs_three_epsilons():
    with pytest.raises(ParameterError):
        ukl_extension_check(LW, epsilons=(1e-1, 1e-2))
