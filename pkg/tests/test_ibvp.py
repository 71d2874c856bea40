import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tbc.errors import CompatibilityError, PadTooSmallError, ParameterError, TailDropError
from tbc.ibvp import (
    apply_Q,
    energy_bdf2,
    gaussian_levels,
    reference_pads,
    relative_errors,
    run_cauchy,
    run_halfline_transparent,
    run_interval_transparent,
    verify_transparency,
)
from tbc.kernels import laurent_projector_series
from tbc.scheme import PRESETS

LW = PRESETS["lax_wendroff"](0.5)


@pytest.fixture(scope="module")
def lw_kernel():
    return laurent_projector_series(LW, n_max=80)


def test_apply_q_matches_stencil():
    u = np.arange(1.0, 7.0).astype(complex)
    mu = 0.5
    out = apply_Q(LW, 0, u)
    padded = np.concatenate([[0], u, [0]])
    expected = -mu * (1 + mu) / 2 * padded[:-2] + (mu * mu - 1) * padded[1:-1] + mu * (1 - mu) / 2 * padded[2:]
    np.testing.assert_allclose(out, expected, atol=1e-15)


def test_cauchy_step_is_lax_wendroff_update():
    mu = 0.5
    u = np.zeros(40, dtype=complex)
    u[15:25] = np.random.default_rng(0).standard_normal(10)
    run = run_cauchy(LW, [u], 1, 0, 39)
    up, um = np.roll(u, -1), np.roll(u, 1)
    expected = u - mu / 2 * (up - um) + mu * mu / 2 * (up - 2 * u + um)
    np.testing.assert_allclose(run.trajectory[1], expected, atol=1e-15)


def test_cauchy_pad_too_small():
    levels = gaussian_levels(LW, 0, 40, (5, 30))
    with pytest.raises(PadTooSmallError) as info:
        run_cauchy(LW, levels, 60, 0, 40)
    assert info.value.suggested > 41


def test_missing_level_defaults_with_warning():
    lf = PRESETS["leap_frog"](0.5)
    with pytest.warns(UserWarning, match="f1 defaulted to f0"):
        run = run_cauchy(lf, gaussian_levels(lf, -100, 160, (10, 40)), 5, -100, 160)
    assert "f1 defaulted to f0" in run.warnings
    np.testing.assert_array_equal(run.trajectory[0], run.trajectory[1])


def test_tail_drop_needs_acknowledgement(lw_kernel):
    levels = gaussian_levels(LW, 0, 200)
    with pytest.raises(TailDropError):
        run_halfline_transparent(LW, lw_kernel, levels, 120, 200)
    run = run_halfline_transparent(LW, lw_kernel, levels, 120, 200, ack_tail_drop=True)
    assert run.trajectory.shape == (121, 201)


def test_interval_too_short():
    with pytest.raises(ParameterError):
        run_interval_transparent(LW, None, 3, [np.zeros(5)], 5, boundary="dirichlet")


def test_incompatible_boundary_data(lw_kernel):
    levels = gaussian_levels(LW, 0, 160)
    g = np.random.default_rng(1).standard_normal((51, 2)).astype(complex)
    with pytest.raises(CompatibilityError) as info:
        run_halfline_transparent(LW, lw_kernel, levels, 50, 160, g=g)
    assert info.value.defects is not None and np.max(info.value.defects) > 1e-3
    run = run_halfline_transparent(LW, lw_kernel, levels, 50, 160, g=g, project_g=True)
    assert np.all(np.isfinite(run.norms))


def _reference(sch, u0, steps, a, b):
    padL, padR = reference_pads(sch, steps)
    lo, hi = a - padL, b + padR
    full = np.zeros(hi - lo + 1, dtype=complex)
    full[a - lo: a - lo + len(u0)] = u0
    return run_cauchy(sch, [full], steps, lo, hi).restrict(a, b)


@settings(max_examples=8, deadline=None)
@given(data=st.lists(st.floats(-1, 1), min_size=20, max_size=20))
def test_halfline_reproduces_whole_line(lw_kernel, data):
    steps, J = 60, 50
    a, b = 0, J + 1
    u0 = np.zeros(b - a + 1, dtype=complex)
    u0[15:35] = data
    if not np.any(u0):
        return
    ref = _reference(LW, u0, steps, a, b)
    _, padR = reference_pads(LW, steps)
    hi = b + padR
    init = np.zeros(hi - a + 1, dtype=complex)
    init[: len(u0)] = u0
    run = run_halfline_transparent(LW, lw_kernel, [init], steps, hi)
    err = relative_errors(run.restrict(a, b), ref)
    assert np.max(err) <= 1e-10


def test_schrodinger_transparency():
    sch = PRESETS["cn_schrodinger"](0.5, 0.5)
    series = laurent_projector_series(sch, n_max=101)
    ledger = verify_transparency(sch, series, J=50, steps=100)
    assert all(led.passed for led in ledger.values())


def test_dirichlet_reflects():
    ledger = verify_transparency(LW, None, J=60, steps=200, boundary="dirichlet", modes=("interval",))
    assert ledger["interval"].max_error >= 1e-2


def test_bdf2_energy_nonincreasing_on_interval():
    sch = PRESETS["heat_bdf2"](1.0)
    series = laurent_projector_series(sch, n_max=101)
    with pytest.warns(UserWarning):
        run = run_interval_transparent(sch, series, 60, gaussian_levels(sch, 0, 61), 100)
    energy = energy_bdf2(run.trajectory)
    assert np.all(np.diff(energy) <= 1e-12 * energy[0])


def test_support_must_fit():
    with pytest.raises(ParameterError):
        verify_transparency(LW, None, J=20, steps=10, support=(10, 40), boundary="dirichlet")
