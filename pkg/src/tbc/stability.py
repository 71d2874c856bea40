"""Stability diagnostics: dispersion curves, glancing points, resolvent solves and probes."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq, linear_sum_assignment, minimize_scalar
from scipy.sparse.linalg import splu

from .errors import AssumptionViolationError, NearCircleError, ParameterError
from .ibvp import _rank_rows, green_tail_width, run_halfline_transparent
from .kernels import KernelSeries, laurent_projector_series, project_compatible
from .scheme import (
    CIRCLE_TOL,
    SchemeDef,
    _amplification_stack,
    boundary_symbol_a,
    dispersion_dF,
    dispersion_F,
    dispersion_roots,
)
from .spectral import companion_M, split_spectrum, stable_projector

ON_CIRCLE = 1e-9
F_TOL = 1e-8
TREND_GROWTH = 1.5


# dispersion curves ----------------------------------------------------------------


@dataclass
class EigenCurves:
    xi: np.ndarray
    branches: np.ndarray  # (len(xi), s+1), columns are continued branches


def dispersion_eigencurves(scheme: SchemeDef, xi_grid, eta: float = 0.0) -> EigenCurves:
    """Roots ``z`` of ``F(e^{i xi}, z) = 0``, continued by nearest-neighbour matching."""
    sch = scheme.reduce(eta)
    xi = np.asarray(xi_grid, dtype=float)
    roots = np.linalg.eigvals(_amplification_stack(sch, np.exp(1j * xi)))
    if np.max(np.abs(roots)) > 1 + 1e-9:
        raise AssumptionViolationError(
            f"amplification root of modulus {np.max(np.abs(roots)):.6f} > 1: Cauchy problem unstable"
        )
    for k in range(1, len(xi)):
        cost = np.abs(roots[k - 1][:, None] - roots[k][None, :])
        _, col = linear_sum_assignment(cost)
        roots[k] = roots[k][col]
    on = np.abs(np.abs(roots) - 1) <= ON_CIRCLE
    n = roots.shape[1]
    for i in range(n):
        for j in range(i + 1, n):
            both = on[:, i] & on[:, j]
            if np.any(both & (np.abs(roots[:, i] - roots[:, j]) < 1e-7)):
                raise AssumptionViolationError("two eigenvalue branches meet on the unit circle")
    return EigenCurves(xi, roots)


# glancing -------------------------------------------------------------------------


@dataclass
class GlancingFinding:
    xi: float
    z: complex
    dF_dkappa: float
    F_residual: float


@dataclass
class GlancingReport:
    label: str
    findings: list
    classification: str
    grid_size: int
    unit_points: int  # grid samples with an eigenvalue on the circle
    min_dk_on_circle: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["findings"] = [
            {"xi": f.xi, "z": [f.z.real, f.z.imag], "dF_dkappa": f.dF_dkappa, "F_residual": f.F_residual}
            for f in self.findings
        ]
        return d


def _branch_at(sch: SchemeDef, xi: float, guess: complex) -> complex:
    roots = dispersion_roots(sch, np.exp(1j * xi))
    return complex(roots[np.argmin(np.abs(roots - guess))])


def _group_speed(sch: SchemeDef, xi: float, z: complex) -> float:
    """``d arg(lambda)/d xi = Im(-i kappa F_kappa / (F_z z))`` on the circle."""
    kappa = np.exp(1j * xi)
    dk, dz = dispersion_dF(sch, kappa, z)
    return float(np.imag(-1j * kappa * dk / (dz * z)))


def _polish_root(sch: SchemeDef, kappa: complex, z: complex) -> complex:
    for _ in range(3):
        f = complex(dispersion_F(sch, kappa, z))
        _, dz = dispersion_dF(sch, kappa, z)
        if dz == 0:
            break
        z = z - f / complex(dz)
    return z


def detect_glancing(scheme: SchemeDef, grid_size: int = 1024, tol: float = 1e-6, eta: float = 0.0) -> GlancingReport:
    """Unit-modulus pairs where ``dF/dkappa`` vanishes (zero group velocity on the circle)."""
    sch = scheme.reduce(eta)
    xi = 2 * np.pi * np.arange(grid_size) / grid_size
    curves = dispersion_eigencurves(sch, xi)
    kappa = np.exp(1j * xi)
    candidates = []
    unit_points = 0
    min_dk = float("inf")
    for b in range(curves.branches.shape[1]):
        z = curves.branches[:, b]
        on = np.abs(np.abs(z) - 1) <= ON_CIRCLE
        unit_points += int(np.sum(on))
        dk, dz = dispersion_dF(sch, kappa, z)
        if np.any(on):
            min_dk = min(min_dk, float(np.min(np.abs(dk[on]))))
        speed = np.imag(-1j * kappa * dk / (dz * z))
        for k in range(grid_size):
            k1 = (k + 1) % grid_size
            if on[k] and abs(dk[k]) <= math.sqrt(tol) * max(1.0, abs(dz[k])):
                candidates.append((xi[k], z[k]))
            if on[k] and on[k1] and speed[k] * speed[k1] < 0:
                a = xi[k]
                c = a + 2 * np.pi / grid_size
                guess = 0.5 * (z[k] + z[k1])

                def g(x, guess=guess):
                    return _group_speed(sch, x, _branch_at(sch, x, guess))

                root = brentq(g, a, c, xtol=1e-14, rtol=1e-15)
                candidates.append((root, _branch_at(sch, root, guess)))
        # isolated unit-modulus points: local maxima of |z| close to 1
        mod = np.abs(z)
        for k in range(grid_size):
            if on[k] or mod[k] <= 1 - 1e-3:
                continue
            if mod[k] >= mod[k - 1] and mod[k] >= mod[(k + 1) % grid_size]:
                h = 2 * np.pi / grid_size
                guess = z[k]
                res = minimize_scalar(
                    lambda x, guess=guess: -abs(_branch_at(sch, x, guess)),
                    bounds=(xi[k] - h, xi[k] + h), method="bounded", options={"xatol": 1e-13},
                )
                zz = _branch_at(sch, res.x, guess)
                if abs(abs(zz) - 1) <= ON_CIRCLE:
                    candidates.append((float(res.x), zz))
    accepted = []
    for x, zc in candidates:
        x = float(np.mod(x, 2 * np.pi))
        kap = np.exp(1j * x)
        zc = _polish_root(sch, kap, complex(zc))
        fres = abs(complex(dispersion_F(sch, kap, zc)))
        dk = abs(complex(dispersion_dF(sch, kap, zc)[0]))
        if fres <= F_TOL and dk <= tol and abs(abs(zc) - 1) <= ON_CIRCLE:
            accepted.append(GlancingFinding(x, zc, dk, fres))
    # flat zeros produce clusters of candidates within a few grid cells; keep the best of each
    h = 2 * np.pi / grid_size
    findings = []
    for f in sorted(accepted, key=lambda f: f.dF_dkappa):
        near = any(
            min(abs(f.xi - g.xi), 2 * np.pi - abs(f.xi - g.xi)) <= 2 * h and abs(f.z - g.z) <= 1e-4
            for g in findings
        )
        if not near:
            findings.append(f)
    findings.sort(key=lambda f: (round(f.xi, 9), round(np.angle(f.z), 9)))
    return GlancingReport(
        sch.label, findings, "glancing" if findings else "non-glancing", grid_size, unit_points,
        min_dk if unit_points else float("nan"),
    )


# resolvent ------------------------------------------------------------------------


@dataclass
class ResolventSolution:
    z: complex
    eta: float
    trace: np.ndarray  # W_1 = (w_p, ..., w_{1-r})
    w: np.ndarray  # w_j for j = 1-r, 2-r, ...
    lo: int
    residual_interior: float
    residual_boundary: float


def resolvent_solve(
    scheme: SchemeDef,
    z: complex,
    eta: float = 0.0,
    F=None,
    G=None,
    tail_tol: float = 1e-17,
    max_length: int = 1_000_000,
    boundary: bool = False,
) -> ResolventSolution:
    """``l^2`` solution of ``sum_l a_l(z) w_{j+l} = F_j`` (j >= 1) with ``Pi^s W_1 = G``.

    The stable component is propagated forward from ``G`` and the unstable
    component backward from beyond the support of ``F``.
    """
    sch = scheme.reduce(eta)
    if abs(z) <= 1 + CIRCLE_TOL and not boundary:
        raise NearCircleError(f"|z| = {abs(z)} is not outside the unit circle")
    r, p = sch.r, sch.p
    n = r + p
    comp = companion_M(sch, z)
    M = comp.matrix
    split = split_spectrum(comp, boundary=boundary)
    Ps = split.pi_s
    Pu = np.eye(n) - Ps
    ap = complex(boundary_symbol_a(sch, p, z))
    F = np.zeros(0, dtype=complex) if F is None else np.asarray(F, dtype=complex)
    G = np.zeros(n, dtype=complex) if G is None else np.asarray(G, dtype=complex)
    if np.linalg.norm(Ps @ G - G) > 1e-9 * max(1.0, np.linalg.norm(G)):
        raise ParameterError("boundary datum G is not in the range of Pi^s")
    K = len(F)
    rho = max([abs(k) for k, _ in split.stable] + [1e-300])
    tail = 1 if rho < 1e-300 else int(math.ceil(math.log(tail_tol) / math.log(rho))) + 1
    length = min(K + max(tail, 1) + p + 1, max_length)
    e = np.zeros(n, dtype=complex)
    e[0] = 1.0 / ap
    Minv = np.linalg.inv(M)
    U = np.zeros((length + 1, n), dtype=complex)
    PuMinv = Pu @ Minv
    Pue = Pu @ e
    for j in range(K, 0, -1):
        U[j] = PuMinv @ (U[j + 1] - Pue * F[j - 1])
    W = np.zeros((length + 1, n), dtype=complex)
    S = Ps @ G
    PsM = Ps @ M
    Pse = Ps @ e
    for j in range(1, length + 1):
        W[j] = S + U[j]
        f = F[j - 1] if j <= K else 0.0
        S = PsM @ S + Pse * f
    w = W[1:, -1]  # w_{j-r}, j = 1..length
    # interior residual on rows j = 1 .. length - r - p
    a = np.array([boundary_symbol_a(sch, ell, z) for ell in range(-r, p + 1)])
    rows = length - r - p
    res = np.zeros(rows, dtype=complex)
    for k, ell in enumerate(range(-r, p + 1)):
        # w_{j+ell} sits at index j + ell + r - 1
        res += a[k] * w[ell + r: ell + r + rows]
    Fpad = np.zeros(rows, dtype=complex)
    Fpad[: min(K, rows)] = F[: min(K, rows)]
    res -= Fpad
    scale = np.linalg.norm(Fpad) + np.sum(np.abs(a)) * np.linalg.norm(w) + 1e-300
    trace = W[1]
    bres = np.linalg.norm(Ps @ trace - G) / max(np.linalg.norm(G), np.linalg.norm(trace), 1e-300)
    return ResolventSolution(complex(z), eta, trace, w, 1 - r, float(np.linalg.norm(res) / scale), float(bres))


def trace_bound_constant(scheme: SchemeDef, z: complex, F, eta: float = 0.0) -> float:
    """``|W_1|^2 (|z|-1) / (|z| sum |F|^2)`` for ``G = 0``."""
    sol = resolvent_solve(scheme, z, eta, F=F)
    nf = float(np.sum(np.abs(np.asarray(F)) ** 2))
    return float(np.linalg.norm(sol.trace) ** 2 * (abs(z) - 1) / (abs(z) * nf))


# strong-stability probe ------------------------------------------------------------


@dataclass
class ProbeRow:
    gamma: float
    dt: float
    max_ratio: float
    trials: int
    skipped: int
    ratios: list = field(default_factory=list)
    kinds: list = field(default_factory=list)
    predicted: float = float("nan")  # frequency-domain ratio of the band profile
    band_max: float = float("nan")


@dataclass
class ProbeLedger:
    label: str
    rows: list
    trend: str
    variation: float  # max/min of per-gamma maxima
    growth: float  # last/first rung of the band-trial maxima
    log: list = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["gamma,dt,max_ratio,trials,band_max,predicted"]
        for row in self.rows:
            lines.append(
                f"{row.gamma:.17g},{row.dt:.17g},{row.max_ratio:.17g},{row.trials},"
                f"{row.band_max:.17g},{row.predicted:.17g}"
            )
        return "\n".join(lines) + "\n"


def _probe_kernel(sch: SchemeDef, n_max: int, eta: float) -> KernelSeries:
    radius = 1 + 1.0 / n_max
    samples = 1 << max(12, int(math.ceil(math.log2(40 * n_max))))
    return laurent_projector_series(sch, eta, n_max=n_max, radius=radius, samples=samples)


def _band_targets(sch: SchemeDef, eta: float) -> list:
    """Unit-modulus ``z`` to excite: glancing eigenvalues, else unit eigenvalues of ``A(1)``."""
    report = detect_glancing(sch, 256, eta=eta)
    if report.findings:
        return [f.z for f in report.findings]
    roots = dispersion_roots(sch, 1.0)
    return [complex(z) for z in roots if abs(abs(z) - 1) <= 1e-8] or [1.0 + 0j]


def optimal_forcing_profile(
    scheme: SchemeDef, z0: complex, gamma: float, width: int, dt: float = 1.0, eta: float = 0.0, tail_tol: float = 1e-10
):
    """Interior datum on ``j = 1..width`` maximizing the frequency-domain ratio at ``z = e^{gamma dt} z0``.

    With zero initial data the weighted sums of the estimate are Parseval
    integrals over ``|z| = e^{gamma dt}``, so the ratio for data concentrated
    near ``z0`` is the Rayleigh quotient of the resolvent solution map. The
    half-line is truncated where the decaying modes fall below ``tail_tol``.
    Returns the unit-norm profile and its predicted ratio.
    """
    sch = scheme.reduce(eta)
    r, p = sch.r, sch.p
    z = math.exp(gamma * dt) * z0
    comp = companion_M(sch, z)
    split = split_spectrum(comp)
    rho = max(abs(k) for k, _ in split.stable)
    extra = int(math.ceil(math.log(tail_tol) / math.log(rho))) if rho > 0 else 1
    J = width + max(extra, 1)
    size = J + r + p  # unknowns w_{1-r} .. w_{J+p}
    B, _ = _rank_rows(split.pi_s, r)
    rows, cols, vals = [], [], []
    trace_cols = [p - k + r - 1 for k in range(r + p)]  # W_1 = (w_p, ..., w_{1-r})
    for i in range(r):
        for k, c in enumerate(trace_cols):
            rows.append(i)
            cols.append(c)
            vals.append(B[i, k])
    a = [complex(boundary_symbol_a(sch, ell, z)) for ell in range(-r, p + 1)]
    for j in range(1, J + 1):
        for k, ell in enumerate(range(-r, p + 1)):
            rows.append(r + j - 1)
            cols.append(j + ell + r - 1)
            vals.append(a[k])
    for i in range(p):
        rows.append(r + J + i)
        cols.append(J + r + i)
        vals.append(1.0)
    A = sp.csc_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(size, size))
    rhs = np.zeros((size, width), dtype=complex)
    rhs[r + np.arange(width), np.arange(width)] = 1.0
    R = splu(A).solve(rhs)  # columns: solution for unit forcing at j
    Rt = R[trace_cols[::-1]]
    Q = gamma / (gamma * dt + 1) * (R.conj().T @ R) + (Rt.conj().T @ Rt)
    # the right-hand side sits at level n+s+1, so its transform carries z^{s+1}
    Q *= gamma / (gamma * dt + 1) * abs(z) ** (2 * (sch.s + 1))
    vals_q, vecs = np.linalg.eigh(0.5 * (Q + Q.conj().T))
    return vecs[:, -1], float(vals_q[-1])


def probe_ratio(run, F_levels: np.ndarray, g: np.ndarray, gamma: float, dt: float, s: int) -> float:
    """Left over right side of the strong-stability estimate (``n >= s+1``)."""
    n = np.arange(len(run.norms))
    w = dt * np.exp(-2 * gamma * n * dt)
    m = n >= s + 1
    left = gamma / (gamma * dt + 1) * np.sum(w[m] * run.norms[m] ** 2) + np.sum(w[m] * run.trace_norms[m] ** 2)
    fn = np.linalg.norm(F_levels, axis=1) ** 2
    gn = np.linalg.norm(g, axis=1) ** 2 if g is not None else np.zeros(len(n))
    right = (gamma * dt + 1) / gamma * np.sum(w[m] * fn[m]) + np.sum(w[m] * gn[m])
    if right == 0:
        return float("nan")
    return float(left / right)


def strong_stability_probe(
    scheme: SchemeDef,
    series: KernelSeries | None = None,
    gammas=(1.0, 0.1, 0.01),
    trials: int = 6,
    steps: int | None = None,
    eta: float = 0.0,
    dt: float = 1.0,
    seed: int = 0,
    width: int = 20,
    scale: float = 1.0,
    max_band_width: int = 1200,
    band_scale: float = 10.0,
) -> ProbeLedger:
    """Sample the strong-stability ratio over white and glancing-band forcing.

    Band trials are time-harmonic at a unit-modulus eigenvalue ``z0`` (a
    glancing one when present) with the spatial profile that maximizes the
    frequency-domain ratio at ``e^{gamma dt} z0``.

    Initial data vanish; the run is the half-line problem with the
    transparent condition, truncated far enough right that the truncation is
    exact over the run. Empirical only: the supremum in the estimate is not
    certified.
    """
    sch = scheme.reduce(eta)
    s, r, p = sch.s, sch.r, sch.p
    rng = np.random.default_rng(seed)
    targets = _band_targets(sch, eta)
    log: list = []
    rows = []
    for gamma in sorted(gammas, reverse=True):
        N = steps if steps is not None else int(math.ceil(20.0 / (gamma * dt)))
        L = N + s + 1
        ser = series if series is not None and series.n_max >= L - 1 else _probe_kernel(sch, L - 1, eta)
        band_width = min(max_band_width, max(width, int(math.ceil(band_scale / (gamma * dt)))))
        optimal = [optimal_forcing_profile(sch, z0, gamma, band_width, dt, eta) for z0 in targets]
        profiles = [prof for prof, _ in optimal]
        predicted = max(val for _, val in optimal)
        span_x = max(width, band_width)
        hi = span_x + L * max(r, 1) + 2 * (p + r) + 2
        if not sch.explicit:
            hi += green_tail_width(sch, N)
        T = max(1, int(math.ceil(1.0 / (gamma * dt))))
        n = np.arange(L)
        ratios, kinds = [], []
        skipped = 0
        for t in range(trials):
            g = None
            if t % 2 == 0:
                kind = "white"
                Fl = np.zeros((L, width), dtype=complex)
                span = min(L - s - 1, T)
                Fl[s + 1: s + 1 + span] = rng.standard_normal((span, width)) + 1j * rng.standard_normal((span, width))
                h = rng.standard_normal((L, r + p)) + 1j * rng.standard_normal((L, r + p))
                h[: s + 1] = 0
                g, corr = project_compatible(ser, h)
                log.append(f"gamma={gamma:g} trial={t}: random g projected (correction {corr:.3e})")
            else:
                kind = "band"
                k = (t // 2) % len(targets)
                Fl = np.where(n >= s + 1, targets[k] ** n, 0)[:, None] * profiles[k][None, :]
            Fl = Fl * scale
            if g is not None:
                g = g * scale
            if not np.any(Fl) and (g is None or not np.any(g)):
                skipped += 1
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                run = run_halfline_transparent(
                    sch, ser, [np.zeros(hi - (1 - r) + 1)], N, hi,
                    forcing=lambda lev, Fl=Fl: Fl[lev], g=g, keep_trajectory=False,
                )
            ratios.append(probe_ratio(run, Fl, g, gamma, dt, s))
            kinds.append(kind)
        finite = [x for x in ratios if np.isfinite(x)]
        band = [x for x, k in zip(ratios, kinds) if k == "band" and np.isfinite(x)]
        rows.append(
            ProbeRow(
                gamma, dt, max(finite) if finite else float("nan"), len(ratios), skipped, ratios, kinds,
                predicted, max(band) if band else float("nan"),
            )
        )
    maxima = np.array([row.max_ratio for row in rows])
    bands = np.array([row.band_max for row in rows])
    variation = float(np.nanmax(maxima) / np.nanmin(maxima))
    growth = float(bands[-1] / bands[0])
    trend = "growing" if growth >= TREND_GROWTH else "bounded"
    return ProbeLedger(sch.label, rows, trend, variation, growth, log)


# uniform Kreiss-Lopatinskii extension -----------------------------------------------


@dataclass
class ExtensionPoint:
    theta: float
    status: str  # converged | singular | boundary-breakdown
    norms: list
    diffs: list


@dataclass
class ExtensionReport:
    label: str
    epsilons: list
    points: list
    singular_thetas: list
    glancing_consistent: bool | None

    def to_dict(self) -> dict:
        return asdict(self)


def ukl_extension_check(
    scheme: SchemeDef,
    eta: float = 0.0,
    theta_grid=None,
    epsilons=(1e-1, 1e-2, 1e-3, 1e-4),
    cross_check: bool = True,
) -> ExtensionReport:
    """Cauchy test of ``Pi^s((1+eps) e^{i theta})`` as ``eps`` decreases."""
    sch = scheme.reduce(eta)
    eps = sorted(epsilons, reverse=True)
    if len(eps) < 3:
        raise ParameterError("need at least three epsilons")
    thetas = np.linspace(0, 2 * np.pi, 64, endpoint=False) if theta_grid is None else np.asarray(theta_grid, float)
    points = []
    singular = []
    scale = max(1.0, float(np.max(np.abs(sch.coeffs))))
    for th in thetas:
        zc = np.exp(1j * th)
        ends = (abs(complex(boundary_symbol_a(sch, sch.p, zc))), abs(complex(boundary_symbol_a(sch, -sch.r, zc))))
        if min(ends) <= 1e-10 * scale:
            points.append(ExtensionPoint(float(th), "boundary-breakdown", [], []))
            continue
        mats = []
        try:
            for e in eps:
                mats.append(stable_projector(sch, (1 + e) * zc))
        except (AssumptionViolationError, NearCircleError):
            points.append(ExtensionPoint(float(th), "boundary-breakdown", [], []))
            continue
        norms = [float(np.linalg.norm(m, 2)) for m in mats]
        diffs = [float(np.linalg.norm(mats[k + 1] - mats[k], 2)) for k in range(len(mats) - 1)]
        shrinking = all(diffs[k + 1] <= 0.5 * diffs[k] + 1e-14 for k in range(len(diffs) - 1))
        small = diffs[-1] <= 1e-2 * max(1.0, norms[-1])
        status = "converged" if shrinking and small else "singular"
        if status == "singular":
            singular.append(float(th))
        points.append(ExtensionPoint(float(th), status, norms, diffs))
    consistent = None
    if cross_check and singular:
        try:
            glancing = detect_glancing(sch, 512)
            angles = [float(np.mod(np.angle(f.z), 2 * np.pi)) for f in glancing.findings]
            step = 2 * np.pi / len(thetas)
            consistent = all(
                any(min(abs(t - a), 2 * np.pi - abs(t - a)) <= step for a in angles) for t in singular
            )
        except AssumptionViolationError:
            consistent = False
    return ExtensionReport(sch.label, list(eps), points, singular, consistent)
