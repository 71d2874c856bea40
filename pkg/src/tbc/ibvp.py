"""Time stepping for the Cauchy, half-line and interval problems.

Every step solves one sparse linear system whose interior rows come from
``Q_{s+1}`` and whose boundary rows come from the kernel at ``n = 0``; the
history part of the boundary convolution goes to the right-hand side. The
factorization is computed once per run.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import (
    AssumptionViolationError,
    CompatibilityError,
    DivergenceError,
    PadTooSmallError,
    ParameterError,
    SingularSymbolError,
    TailDropError,
)
from .kernels import (
    KernelSeries,
    compatibility_check,
    initial_boundary_data,
    project_compatible,
    scalar_to_matrix,
)
from .scheme import SchemeDef
from .spectral import companion_at_infinity, split_spectrum

CONTAMINATION_REL = 1e-13


@dataclass
class GridState:
    """The ``s+1`` newest levels on ``[lo, hi]`` plus boundary-trace history."""

    lo: int
    hi: int
    levels: list
    step_count: int = 0
    trace_history: dict = field(default_factory=lambda: {"left": [], "right": []})
    solver: object = None
    u0_norm: float = 0.0

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1


@dataclass
class RunResult:
    lo: int
    hi: int
    trajectory: np.ndarray | None
    norms: np.ndarray
    trace_norms: np.ndarray
    wall_time: float
    warnings: list = field(default_factory=list)
    traces_left: np.ndarray | None = None
    traces_right: np.ndarray | None = None
    contamination: float = 0.0

    def restrict(self, a: int, b: int) -> np.ndarray:
        return self.trajectory[:, a - self.lo: b - self.lo + 1]


def apply_Q(scheme: SchemeDef, sigma: int, u: np.ndarray) -> np.ndarray:
    """``(Q_sigma u)_j`` on the same index window, zero outside it."""
    r, p = scheme.r, scheme.p
    padded = np.concatenate([np.zeros(r, dtype=complex), u, np.zeros(p, dtype=complex)])
    out = np.zeros(len(u), dtype=complex)
    for ell in range(-r, p + 1):
        c = scheme.coeffs[ell + r, sigma]
        if c != 0:
            out += c * padded[r + ell: r + ell + len(u)]
    return out


def _interior_block(scheme: SchemeDef, lo: int, hi: int, rows_j: range):
    """Triplets for ``(Q_{s+1} u)_j`` on rows ``rows_j`` (columns outside [lo, hi] dropped)."""
    ri, ci, vals = [], [], []
    for k, j in enumerate(rows_j):
        for ell in range(-scheme.r, scheme.p + 1):
            c = scheme.coeffs[ell + scheme.r, scheme.s + 1]
            col = j + ell - lo
            if c != 0 and 0 <= col <= hi - lo:
                ri.append(k)
                ci.append(col)
                vals.append(c)
    return ri, ci, vals


def _rank_rows(P0: np.ndarray, rank: int):
    """Rows ``B`` and map ``C`` with ``P0 x = b  <=>  B x = C b`` for ``b`` in range(P0)."""
    U, S, Vh = np.linalg.svd(P0)
    if rank and S[rank - 1] <= 1e-10 * max(1.0, S[0]):
        raise AssumptionViolationError("boundary kernel at n=0 is rank deficient")
    return Vh[:rank], (U[:, :rank].conj().T) / S[:rank, None]


class _Stepper:
    """Shared machinery for one truncated run."""

    def __init__(self, scheme, lo, hi, interior, left=None, right=None):
        self.sch = scheme
        self.lo, self.hi = lo, hi
        self.interior = interior  # range of j with interior equations
        self.left = left
        self.right = right
        N = hi - lo + 1
        rows, cols, vals = [], [], []
        row0 = 0
        self.row_left = self.row_right = None
        if left is not None:
            B = left["rows"]
            for i in range(B.shape[0]):
                for k, col in enumerate(left["cols"]):
                    if B[i, k] != 0:
                        rows.append(row0 + i)
                        cols.append(col)
                        vals.append(B[i, k])
            self.row_left = slice(row0, row0 + B.shape[0])
            row0 += B.shape[0]
        ri, ci, vi = _interior_block(scheme, lo, hi, interior)
        rows += [row0 + k for k in ri]
        cols += ci
        vals += vi
        self.row_interior = slice(row0, row0 + len(interior))
        row0 += len(interior)
        if right is not None:
            B = right["rows"]
            for i in range(B.shape[0]):
                for k, col in enumerate(right["cols"]):
                    if B[i, k] != 0:
                        rows.append(row0 + i)
                        cols.append(col)
                        vals.append(B[i, k])
            self.row_right = slice(row0, row0 + B.shape[0])
            row0 += B.shape[0]
        if row0 != N:
            raise ParameterError(f"system has {row0} equations for {N} unknowns")
        A = sp.csc_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(N, N))
        try:
            self.lu = splu(A)
        except RuntimeError as exc:
            raise SingularSymbolError(f"step operator is singular: {exc}") from exc
        self.int_offset = interior.start - lo if len(interior) else 0

    def interior_rhs(self, levels: list, forcing) -> np.ndarray:
        acc = np.zeros(self.hi - self.lo + 1, dtype=complex)
        for sigma, u in enumerate(levels):
            acc -= apply_Q(self.sch, sigma, u)
        rhs = acc[self.int_offset: self.int_offset + len(self.interior)]
        if forcing is not None:
            f = np.asarray(forcing, dtype=complex)
            k = min(len(f), len(rhs))
            rhs[:k] += f[:k]
        return rhs

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        out = self.lu.solve(rhs)
        return out


def _trace_cols(lo: int, top: int, n: int) -> list:
    """Columns of ``(u_top, u_{top-1}, ..., u_{top-n+1})``."""
    return [top - k - lo for k in range(n)]


def _levels_from(f_levels, s: int, lo: int, hi: int, warn: list) -> list:
    """Initial levels on ``[lo, hi]``; accepts arrays indexed from ``lo`` or dicts ``{j: value}``."""
    if isinstance(f_levels, np.ndarray) and f_levels.ndim == 1:
        f_levels = [f_levels]
    levels = []
    for item in f_levels:
        if isinstance(item, dict):
            u = np.zeros(hi - lo + 1, dtype=complex)
            for j, v in item.items():
                if not lo <= j <= hi:
                    raise ParameterError(f"initial datum at j={j} outside [{lo}, {hi}]")
                u[j - lo] = v
        else:
            u = np.asarray(item, dtype=complex).copy()
            if len(u) != hi - lo + 1:
                raise ParameterError(f"initial level has length {len(u)}, expected {hi - lo + 1}")
        levels.append(u)
    if len(levels) > s + 1:
        raise ParameterError(f"got {len(levels)} initial levels, scheme needs {s + 1}")
    while len(levels) < s + 1:
        warn.append(f"f{len(levels)} defaulted to f{len(levels) - 1}")
        levels.append(levels[-1].copy())
    for msg in warn:
        warnings.warn(msg, stacklevel=3)
    return levels


# Cauchy reference ---------------------------------------------------------------


def green_tail_width(scheme: SchemeDef, steps: int, tol: float = 1e-14) -> int:
    """Cells needed for ``steps`` applications of ``Q_{s+1}^{-1}`` to decay below ``tol``."""
    if scheme.explicit:
        return 0
    split = split_spectrum(companion_at_infinity(scheme), boundary=True)
    rho = max([abs(k) for k, _ in split.stable] + [1 / abs(k) for k, _ in split.unstable] + [1e-300])
    if rho >= 1:
        raise AssumptionViolationError("level-(s+1) operator has a root on the unit circle")
    log_tol = math.log(tol)
    d = 1
    while True:
        bound = math.lgamma(d + steps + 1) - math.lgamma(d + 1) - math.lgamma(steps + 1) + d * math.log(rho)
        if bound < log_tol:
            return d
        d += max(1, d // 8)


def reference_pads(scheme: SchemeDef, steps: int) -> tuple[int, int]:
    """Left and right zero-padding for the whole-line reference."""
    tail = green_tail_width(scheme, steps)
    margin = 4 * (scheme.p + scheme.r) + 8
    return steps * scheme.p + tail + margin, steps * scheme.r + tail + margin


def new_state(scheme: SchemeDef, lo: int, hi: int, f_levels, warn: list | None = None) -> GridState:
    warn = [] if warn is None else warn
    levels = _levels_from(f_levels, scheme.s, lo, hi, warn)
    return GridState(lo, hi, levels, 0, u0_norm=float(np.linalg.norm(levels[0])))


def step_cauchy(scheme: SchemeDef, state: GridState, forcing=None, monitor: bool = True) -> GridState:
    """Advance the zero-padded whole-line problem by one level."""
    if state.solver is None:
        state.solver = _Stepper(scheme, state.lo, state.hi, range(state.lo, state.hi + 1))
    st = state.solver
    new = st.solve(st.interior_rhs(state.levels, forcing))
    if monitor:
        w = max(scheme.p, scheme.r) + 1
        edge = max(float(np.max(np.abs(new[:w]))), float(np.max(np.abs(new[-w:]))))
        if edge > CONTAMINATION_REL * max(state.u0_norm, 1e-300):
            raise PadTooSmallError(
                f"edge contamination {edge:.3e} after {state.step_count + 1} steps",
                suggested=2 * state.size,
            )
    state.levels = state.levels[1:] + [new]
    state.step_count += 1
    return state


def run_cauchy(scheme: SchemeDef, f_levels, steps: int, lo: int, hi: int, forcing=None, monitor=True) -> RunResult:
    t0 = time.perf_counter()
    warn: list = []
    state = new_state(scheme, lo, hi, f_levels, warn)
    traj = [u.copy() for u in state.levels]
    for n in range(steps):
        F = None if forcing is None else forcing(state.step_count + scheme.s + 1)
        step_cauchy(scheme, state, F, monitor)
        traj.append(state.levels[-1].copy())
        if not np.all(np.isfinite(traj[-1])):
            raise DivergenceError(f"non-finite values at step {n + 1}")
    traj = np.array(traj)
    norms = np.linalg.norm(traj, axis=1)
    return RunResult(lo, hi, traj, norms, np.zeros(len(traj)), time.perf_counter() - t0, warn)


# truncated problems --------------------------------------------------------------


def _matrix_end(mats: np.ndarray, rank: int, cols: list, complement: bool):
    P0 = np.eye(mats.shape[1]) - mats[0] if complement else mats[0]
    B, C = _rank_rows(P0, rank)
    return {"kind": "matrix", "rows": B, "C": C, "cols": cols, "complement": complement}


def _end_rows(scheme, series, kind, side, lo, top, mats):
    """Boundary-row description for one end; ``top`` is the highest trace index."""
    r, p = scheme.r, scheme.p
    n = r + p
    cols = _trace_cols(lo, top, n)
    if kind == "dirichlet":
        ghost = list(range(r)) if side == "left" else list(range(p))
        # left ghosts are u_0..u_{1-r} (trace slots p..p+r-1); right ghosts u_{J+p}..u_{J+1}
        slots = [p + k for k in ghost] if side == "left" else ghost
        B = np.zeros((len(slots), n))
        for i, k in enumerate(slots):
            B[i, k] = 1.0
        return {"kind": "dirichlet", "rows": B, "cols": cols}
    if series.kind == "scalar":
        # left: u_0 - ku_0 u_1 ; right: u_{J+1} - ks_0 u_J ; trace slots (top, top-1)
        c0 = series.ku_inv[0] if side == "left" else series.ks[0]
        B = np.array([[-c0, 1.0]]) if side == "left" else np.array([[1.0, -c0]])
        return {"kind": "scalar", "rows": B, "cols": cols}
    return _matrix_end(mats, r if side == "left" else p, cols, side == "right")


def _check_length(series: KernelSeries, levels_total: int, ack_tail_drop: bool):
    if series.n_max < levels_total - 1 and not ack_tail_drop:
        raise TailDropError(
            f"kernel has n_max={series.n_max} but the run reaches level {levels_total - 1}; "
            "pass ack_tail_drop=True to run with a truncated history"
        )


def _scalar_pad(x: np.ndarray, length: int) -> np.ndarray:
    out = np.zeros(length, dtype=complex)
    k = min(length, len(x))
    out[:k] = x[:k]
    return out


def _run_truncated(
    scheme, series, lo, hi, interior, left_kind, right_kind, f_levels, steps,
    forcing, g_left, g_right, ack_tail_drop, project_g, keep_trajectory, top_left, top_right,
) -> RunResult:
    t0 = time.perf_counter()
    s, r, p = scheme.s, scheme.r, scheme.p
    L = steps + s + 1
    warn: list = []
    levels = _levels_from(f_levels, s, lo, hi, warn)
    uses_kernel = "transparent" in (left_kind, right_kind)
    mats = None
    if uses_kernel:
        _check_length(series, L, ack_tail_drop)
        if series.kind == "matrix":
            mats = series.padded(L)
        else:
            y = _scalar_pad(series.ku_inv, L)
            k = _scalar_pad(series.ks, L)
    ends = {}
    if left_kind is not None:
        ends["left"] = _end_rows(scheme, series, left_kind, "left", lo, top_left, mats)
    if right_kind is not None:
        ends["right"] = _end_rows(scheme, series, right_kind, "right", lo, top_right, mats)
    stepper = _Stepper(scheme, lo, hi, interior, ends.get("left"), ends.get("right"))

    n = r + p
    X = {side: np.zeros((L, n), dtype=complex) for side in ends}
    for m in range(s + 1):
        for side, e in ends.items():
            X[side][m] = levels[m][e["cols"]]

    # boundary data for the matrix kind: initial part from the data, rest user-given
    G = {}
    for side, e, g_user in (("left", ends.get("left"), g_left), ("right", ends.get("right"), g_right)):
        if e is None:
            continue
        g = np.zeros((L, n if e["kind"] == "matrix" else 1), dtype=complex)
        if g_user is not None:
            gu = np.asarray(g_user, dtype=complex)
            gu = gu.reshape(len(gu), -1)
            k = min(L, len(gu))
            g[:k, : gu.shape[1]] = gu[:k]
        if e["kind"] == "matrix":
            kernel = series if side == "left" else _complement_series(series, L)
            g[: s + 1] = initial_boundary_data(kernel, X[side][: s + 1])
            if g_user is not None:
                data = compatibility_check(kernel, g)
                if not data.compatible:
                    if not project_g:
                        raise CompatibilityError(
                            f"{side} boundary data incompatible (max defect {np.max(data.defects):.3e})",
                            data.defects,
                        )
                    g, corr = project_compatible(kernel, g)
                    warn.append(f"{side} boundary data projected, correction norm {corr:.3e}")
        G[side] = g

    keep = [lv.copy() for lv in levels] if keep_trajectory else None
    norms = [float(np.linalg.norm(lv)) for lv in levels]
    trace_norms = [float(np.linalg.norm(levels[m][ends["left"]["cols"]])) if "left" in ends else 0.0 for m in range(s + 1)]
    N = hi - lo + 1
    for lev in range(s + 1, L):
        rhs = np.zeros(N, dtype=complex)
        F = None if forcing is None else forcing(lev)
        rhs[stepper.row_interior] = stepper.interior_rhs(levels, F)
        for side, e in ends.items():
            rows = stepper.row_left if side == "left" else stepper.row_right
            g = G[side][lev]
            if e["kind"] == "dirichlet":
                rhs[rows] = 0.0
            elif e["kind"] == "scalar":
                coef = y if side == "left" else k
                # left history is u_1 (slot 0 of (u_1, u_0)); right is u_J (slot 1 of (u_{J+1}, u_J))
                src = X[side][:lev, 0 if side == "left" else 1]
                rhs[rows] = np.dot(coef[lev:0:-1], src) + g[0]
            else:
                hist = np.einsum("mij,mj->i", mats[lev:0:-1], X[side][:lev])
                b = g - hist if side == "left" else g + hist
                rhs[rows] = e["C"] @ b
        new = stepper.solve(rhs)
        if not np.all(np.isfinite(new)):
            raise DivergenceError(f"non-finite values at level {lev}")
        levels = levels[1:] + [new]
        for side, e in ends.items():
            X[side][lev] = new[e["cols"]]
        norms.append(float(np.linalg.norm(new)))
        trace_norms.append(float(np.linalg.norm(X["left"][lev])) if "left" in X else 0.0)
        if keep is not None:
            keep.append(new.copy())
    return RunResult(
        lo, hi, None if keep is None else np.array(keep), np.array(norms), np.array(trace_norms),
        time.perf_counter() - t0, warn, X.get("left"), X.get("right"),
    )


def _complement_series(series: KernelSeries, L: int) -> KernelSeries:
    """Right-end kernel ``delta_{n0} I - Pi_n``."""
    mats = -series.padded(L)
    mats[0] += np.eye(mats.shape[1])
    return KernelSeries("matrix", L - 1, series.r, series.p, matrices=mats, label=series.label + " (right)")


def run_halfline_transparent(
    scheme: SchemeDef,
    series: KernelSeries,
    f_levels,
    steps: int,
    hi: int,
    forcing=None,
    g=None,
    ack_tail_drop: bool = False,
    project_g: bool = False,
    keep_trajectory: bool = True,
    boundary: str = "transparent",
) -> RunResult:
    """Half-line ``j >= 1-r`` truncated at ``hi`` with zero data beyond.

    ``forcing(level)`` returns interior right-hand sides (already multiplied
    by dt) for ``j = 1, 2, ...``; ``g[level]`` is the boundary datum.
    """
    lo = 1 - scheme.r
    return _run_truncated(
        scheme, series, lo, hi, range(1, hi + 1), boundary, None, f_levels, steps,
        forcing, g, None, ack_tail_drop, project_g, keep_trajectory, scheme.p, None,
    )


def run_interval_transparent(
    scheme: SchemeDef,
    series: KernelSeries,
    J: int,
    f_levels,
    steps: int,
    g_left=None,
    g_right=None,
    forcing=None,
    ack_tail_drop: bool = False,
    project_g: bool = False,
    keep_trajectory: bool = True,
    boundary: str = "transparent",
) -> RunResult:
    """Interval ``[1-r, J+p]`` with the left kernel and its complement on the right."""
    if J < scheme.p + scheme.r + 2:
        raise ParameterError(f"J={J} must be >= p + r + 2")
    lo, hi = 1 - scheme.r, J + scheme.p
    return _run_truncated(
        scheme, series, lo, hi, range(1, J + 1), boundary, boundary, f_levels, steps,
        forcing, g_left, g_right, ack_tail_drop, project_g, keep_trajectory, scheme.p, J + scheme.p,
    )


# transparency oracle -------------------------------------------------------------


def gaussian_levels(scheme: SchemeDef, lo: int, hi: int, support=(10, 40), width=None) -> list:
    """Truncated Gaussian, exactly zero outside ``support``; one level (others default to copies)."""
    a, b = support
    c = 0.5 * (a + b)
    w = (b - a) / 8 if width is None else width
    j = np.arange(lo, hi + 1)
    u = np.where((j >= a) & (j <= b), np.exp(-0.5 * ((j - c) / w) ** 2), 0.0).astype(complex)
    return [u]


@dataclass
class TransparencyLedger:
    mode: str
    boundary: str
    errors: np.ndarray
    max_error: float
    tol: float
    passed: bool
    pad: tuple
    wall_time: float


def relative_errors(trunc: np.ndarray, ref: np.ndarray) -> np.ndarray:
    num = np.linalg.norm(trunc - ref, axis=1)
    den = np.linalg.norm(ref, axis=1)
    return num / np.where(den > 0, den, 1.0)


def verify_transparency(
    scheme: SchemeDef,
    series: KernelSeries | None,
    J: int = 60,
    steps: int = 200,
    tol: float = 1e-7,
    modes=("halfline", "interval"),
    boundary: str = "transparent",
    support=(10, 40),
    ack_tail_drop: bool = False,
    max_pad_retries: int = 3,
) -> dict:
    """Compare truncated runs with the padded whole-line reference on ``[1-r, J+p]``."""
    r, p = scheme.r, scheme.p
    a, b = 1 - r, J + p
    if not (p + 1 <= support[0] and support[1] <= J - r - 1):
        raise ParameterError(f"support {support} must lie in [p+1, J-r-1] = [{p + 1}, {J - r - 1}]")
    padL, padR = reference_pads(scheme, steps)
    for _ in range(max_pad_retries + 1):
        lo_ref, hi_ref = a - padL, b + padR
        f_ref = gaussian_levels(scheme, lo_ref, hi_ref, support)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                ref = run_cauchy(scheme, f_ref, steps, lo_ref, hi_ref)
            break
        except PadTooSmallError:
            padL, padR = 2 * padL, 2 * padR
    else:
        raise PadTooSmallError("reference padding retries exhausted", suggested=2 * (padL + padR))
    ref_win = ref.restrict(a, b)
    out = {}
    for mode in modes:
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if mode == "halfline":
                hi = b + padR
                run = run_halfline_transparent(
                    scheme, series, gaussian_levels(scheme, a, hi, support), steps, hi,
                    ack_tail_drop=ack_tail_drop, boundary=boundary,
                )
            elif mode == "interval":
                run = run_interval_transparent(
                    scheme, series, J, gaussian_levels(scheme, a, b, support), steps,
                    ack_tail_drop=ack_tail_drop, boundary=boundary,
                )
            else:
                raise ParameterError(f"unknown mode {mode!r}")
        errs = relative_errors(run.restrict(a, b), ref_win)
        worst = float(np.max(errs))
        out[mode] = TransparencyLedger(
            mode, boundary, errs, worst, tol, bool(worst <= tol), (padL, padR),
            time.perf_counter() - t0 + ref.wall_time,
        )
    return out


def energy_bdf2(traj: np.ndarray) -> np.ndarray:
    """``E^n = |u^{n+1}|^2 + |2u^{n+1} - u^n|^2``."""
    u0, u1 = traj[:-1], traj[1:]
    return np.linalg.norm(u1, axis=1) ** 2 + np.linalg.norm(2 * u1 - u0, axis=1) ** 2
