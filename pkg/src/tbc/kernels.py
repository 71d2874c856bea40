"""Transparent-boundary convolution kernels and the compatibility algebra.

Two independent routes produce the kernel:

* contour quadrature of the stable projector ``Pi^s(z)`` on ``|z| = R``
  (matrix kind, any stencil), and
* power-series identification in ``1/z`` of the roots of
  ``a_{-1}(z) + a_0(z) k + a_1(z) k^2 = 0`` (scalar kind, ``p = r = 1``).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AssumptionViolationError,
    NearCircleError,
    ParameterError,
    ResolutionError,
    SingularExpansionError,
    UnsupportedSchemeError,
)
from .scheme import CIRCLE_TOL, SchemeDef, _amplification_stack, check_extreme_coefficients, check_noncharacteristic
from .spectral import stable_projector_batch

DEFAULT_RADIUS = 1.02
SENTINEL_REL = 1e-8


@dataclass
class KernelSeries:
    """``matrices[n]`` is ``Pi_n``; scalar kind stores ``ku_inv[n]`` and ``ks[n]`` instead."""

    kind: str
    n_max: int
    r: int
    p: int
    matrices: np.ndarray | None = None
    ku_inv: np.ndarray | None = None
    ks: np.ndarray | None = None
    radius_used: float | None = None
    samples: int | None = None
    residual: float | None = None
    sentinel: float | None = None
    label: str = ""
    growth: dict = field(default_factory=dict)

    def padded(self, length: int) -> np.ndarray:
        """``Pi_0 .. Pi_{length-1}``, zero past ``n_max`` (tail dropped)."""
        mats = self.matrices if self.kind == "matrix" else scalar_to_matrix(self).matrices
        out = np.zeros((length,) + mats.shape[1:], dtype=complex)
        k = min(length, len(mats))
        out[:k] = mats[:k]
        return out


def default_samples(n_max: int) -> int:
    m = max(4096, 8 * n_max)
    return 1 << (m - 1).bit_length()


def _growth(mats: np.ndarray) -> dict:
    norms = np.linalg.norm(mats, 2, axis=(1, 2))
    n = np.arange(len(norms))
    return {str(d): float(np.sum(norms * (1 + d) ** (-n.astype(float)))) for d in (0.01, 0.1)}


def auto_radius(scheme: SchemeDef, eta: float = 0.0, grid: int = 1024) -> float:
    """Contour radius outside every amplification root on the torus (Laurent region of convergence)."""
    sch = scheme.reduce(eta)
    kappas = np.exp(2j * np.pi * np.arange(grid) / grid)
    rho = float(np.max(np.abs(np.linalg.eigvals(_amplification_stack(sch, kappas)))))
    return max(DEFAULT_RADIUS, 1.05 * rho)


def _contour_samples(scheme: SchemeDef, eta: float, n_max: int, radius, samples: int | None):
    if radius == "auto":
        radius = auto_radius(scheme, eta)
    M = samples if samples is not None else default_samples(n_max)
    if M < 4 * n_max or M & (M - 1):
        raise ResolutionError(f"samples={M} must be a power of two >= 4*n_max={4 * n_max}")
    if radius - 1 <= CIRCLE_TOL:
        raise NearCircleError(f"contour radius {radius} too close to the unit circle")
    sch = scheme.reduce(eta)
    if not check_noncharacteristic(sch).passed:
        raise AssumptionViolationError("weak noncharacteristic condition fails")
    zs = radius * np.exp(2j * np.pi * np.arange(M) / M)
    return sch, M, radius, stable_projector_batch(sch, zs)


def _coefficients(samples_fft: np.ndarray, n_max: int, radius: float):
    """Positive coefficients and the negative-index aliasing sentinel."""
    M = samples_fft.shape[0]
    n = np.arange(n_max + 1)
    scale = radius ** n.astype(float)
    coeffs = samples_fft[: n_max + 1] * scale.reshape((-1,) + (1,) * (samples_fft.ndim - 1))
    m = np.arange(1, M // 2 + 1)
    neg = samples_fft[M - m] * (radius ** (-m.astype(float))).reshape((-1,) + (1,) * (samples_fft.ndim - 1))
    return coeffs, neg


def _flat_norm(x: np.ndarray) -> np.ndarray:
    return np.abs(x) if x.ndim == 1 else np.linalg.norm(x.reshape(len(x), -1), axis=1)


def laurent_projector_series(
    scheme: SchemeDef,
    eta: float = 0.0,
    n_max: int = 100,
    radius: float | str = DEFAULT_RADIUS,
    samples: int | None = None,
) -> KernelSeries:
    """Laurent coefficients ``Pi_n`` of ``Pi^s(z) = sum_n z^{-n} Pi_n`` by the trapezoid rule."""
    sch, M, radius, P = _contour_samples(scheme, eta, n_max, radius, samples)
    mats, neg = _coefficients(np.fft.ifft(P, axis=0), n_max, radius)
    ref = float(np.max(_flat_norm(mats)))
    sentinel = float(np.max(_flat_norm(neg)))
    if sentinel > SENTINEL_REL * ref:
        raise ResolutionError(
            f"aliasing sentinel {sentinel:.3e} exceeds {SENTINEL_REL:g} * max|Pi_n|; increase samples or radius"
        )
    series = KernelSeries(
        "matrix", n_max, sch.r, sch.p, matrices=mats, radius_used=radius, samples=M,
        sentinel=sentinel, label=sch.label,
    )
    series.residual = check_algebraic_constraints(series).max_defect
    series.growth = _growth(mats)
    return series


def contour_scalar_series(
    scheme: SchemeDef,
    eta: float = 0.0,
    n_max: int = 100,
    radius: float | str = DEFAULT_RADIUS,
    samples: int | None = None,
) -> KernelSeries:
    """Scalar coefficients read off the sampled projector (``p = r = 1``).

    ``Pi^s`` has kernel ``span(1, 1/k_u)`` and range ``span(k_s, 1)``, so
    ``1/k_u = -Pi_10 / Pi_11`` and ``k_s = Pi_00 / Pi_10``.
    """
    if scheme.p != 1 or scheme.r != 1:
        raise UnsupportedSchemeError("scalar kernels need p = r = 1")
    sch, M, radius, P = _contour_samples(scheme, eta, n_max, radius, samples)
    y = -P[:, 1, 0] / P[:, 1, 1]
    k = P[:, 0, 0] / P[:, 1, 0]
    ys, yneg = _coefficients(np.fft.ifft(y), n_max, radius)
    ks, kneg = _coefficients(np.fft.ifft(k), n_max, radius)
    ref = max(float(np.max(np.abs(ys))), float(np.max(np.abs(ks))))
    sentinel = max(float(np.max(np.abs(yneg))), float(np.max(np.abs(kneg))))
    if sentinel > SENTINEL_REL * ref:
        raise ResolutionError(f"aliasing sentinel {sentinel:.3e} exceeds tolerance; increase samples or radius")
    return KernelSeries(
        "scalar", n_max, 1, 1, ku_inv=ys, ks=ks, radius_used=radius, samples=M,
        sentinel=sentinel, label=sch.label,
    )


# recursions -----------------------------------------------------------------


def _selfconv(t: np.ndarray, n: int) -> complex:
    """``sum_{m=1}^{n-1} t_m t_{n-m}``."""
    if n < 2:
        return 0.0
    return complex(np.dot(t[1:n], t[n - 1:0:-1]))


def _lax_wendroff_series(mu: float, n_max: int):
    t = np.zeros(n_max + 1, dtype=complex)
    if n_max >= 1:
        t[1] = -mu * (1 - mu) / 2
    if n_max >= 2:
        t[2] = (1 - mu * mu) * t[1]
    for n in range(2, n_max):
        t[n + 1] = (1 - mu * mu) * t[n] + 0.5 * mu * (1 + mu) * _selfconv(t, n)
    return t, -(1 + mu) / (1 - mu) * t


def _leap_frog_series(mu: float, n_max: int):
    t = np.zeros(n_max + 1, dtype=complex)
    if n_max >= 1:
        t[1] = mu
    for n in range(2, n_max):
        t[n + 1] = t[n - 1] - mu * _selfconv(t, n)
    return t, -t


def _heat_explicit_series(mu: float, n_max: int):
    t = np.zeros(n_max + 1, dtype=complex)
    if n_max >= 1:
        t[1] = mu
    if n_max >= 2:
        t[2] = (1 - 2 * mu) * mu
    for n in range(2, n_max):
        t[n + 1] = (1 - 2 * mu) * t[n] + mu * _selfconv(t, n)
    return t, t.copy()


def _heat_bdf2_series(mu: float, n_max: int):
    c0 = (1.5 + 2 * mu) / mu
    k = np.zeros(n_max + 1, dtype=complex)
    k[0] = (c0 - np.sqrt(c0 * c0 - 4)) / 2
    denom = 2 * k[0] - c0
    if n_max >= 1:
        k[1] = (-2 * k[0] / mu) / denom
    for n in range(2, n_max + 1):
        k[n] = (-2 * k[n - 1] / mu + k[n - 2] / (2 * mu) - _selfconv(k, n)) / denom
    return k.copy(), k


_RECURSIONS = {
    "lax_wendroff": _lax_wendroff_series,
    "leap_frog": _leap_frog_series,
    "heat_explicit": _heat_explicit_series,
    "heat_bdf2": _heat_bdf2_series,
}


def scalar_kernel_recursive(name: str, mu: float, n_max: int) -> KernelSeries:
    """Closed recursions for the four ``p = r = 1`` presets."""
    try:
        rec = _RECURSIONS[name]
    except KeyError:
        raise UnsupportedSchemeError(f"no recursion for preset {name!r}") from None
    if name in ("lax_wendroff", "leap_frog") and (mu == 0 or abs(mu) == 1):
        raise ParameterError(f"{name}: mu={mu} outside the validity range")
    if name in ("heat_explicit", "heat_bdf2") and not mu > 0:
        raise ParameterError(f"{name}: mu must be positive")
    ku_inv, ks = rec(mu, n_max)
    return KernelSeries("scalar", n_max, 1, 1, ku_inv=ku_inv, ks=ks, label=f"{name}(mu={mu!r})")


def _series_root(c2: np.ndarray, c1: np.ndarray, c0: np.ndarray, x0: complex, n_max: int) -> np.ndarray:
    """Power series ``x(w)`` with ``x(0) = x0`` solving ``c2 x^2 + c1 x + c0 = 0``."""

    def coef(c, i):
        return c[i] if i < len(c) else 0.0

    deriv = coef(c1, 0) + 2 * coef(c2, 0) * x0
    if abs(deriv) <= 1e-14 * max(1.0, abs(coef(c1, 0)), abs(coef(c2, 0))):
        raise SingularExpansionError("double root at infinity: leading quadratic is degenerate")
    x = np.zeros(n_max + 1, dtype=complex)
    sq = np.zeros(n_max + 1, dtype=complex)  # coefficients of x^2
    x[0] = x0
    sq[0] = x0 * x0
    for n in range(1, n_max + 1):
        sq_trunc = complex(np.dot(x[1:n], x[n - 1:0:-1])) if n >= 2 else 0.0
        acc = coef(c0, n)
        for i in range(0, min(n, len(c1) - 1) + 1):
            acc += coef(c1, i) * (x[n - i] if i > 0 else 0.0)
        for i in range(0, min(n, len(c2) - 1) + 1):
            acc += coef(c2, i) * (sq[n - i] if i > 0 else sq_trunc)
        x[n] = -acc / deriv
        sq[n] = sq_trunc + 2 * x0 * x[n]
    return x


def _quadratic_root_in_disk(c2: complex, c1: complex, c0: complex) -> complex:
    if c2 == 0:
        if c1 == 0:
            raise SingularExpansionError("leading quadratic vanishes identically")
        return -c0 / c1
    roots = np.roots([c2, c1, c0])
    inside = [z for z in roots if abs(z) < 1]
    if len(inside) != 1:
        raise SingularExpansionError(f"expected one root in the unit disk at infinity, got {roots}")
    return complex(inside[0])


def generic_scalar_kernel(scheme: SchemeDef, n_max: int, eta: float = 0.0) -> KernelSeries:
    """Identify ``1/k_u`` and ``k_s`` as power series in ``w = 1/z`` for any ``p = r = 1`` scheme."""
    sch = scheme.reduce(eta)
    if sch.p != 1 or sch.r != 1:
        raise UnsupportedSchemeError("generic scalar kernel needs p = r = 1")
    if check_extreme_coefficients(sch) == "fail":
        raise UnsupportedSchemeError("technical restriction on the extreme coefficients fails")
    # A_ell(w) = w^{s+1} a_ell(1/w): coefficient of w^i is a[ell, s+1-i]
    A = {ell: sch.coeffs[ell + 1, ::-1].copy() for ell in (-1, 0, 1)}
    k0 = _quadratic_root_in_disk(A[1][0], A[0][0], A[-1][0])
    y0 = _quadratic_root_in_disk(A[-1][0], A[0][0], A[1][0])
    ks = _series_root(A[1], A[0], A[-1], k0, n_max)
    ku_inv = _series_root(A[-1], A[0], A[1], y0, n_max)
    return KernelSeries("scalar", n_max, 1, 1, ku_inv=ku_inv, ks=ks, label=sch.label)


# series algebra ----------------------------------------------------------------


def _mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = len(a)
    return np.convolve(a, b)[:n]


def _reciprocal(a: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a)
    out[0] = 1 / a[0]
    for n in range(1, len(a)):
        out[n] = -np.dot(a[1:n + 1], out[n - 1::-1]) / a[0]
    return out


def scalar_to_matrix(series: KernelSeries) -> KernelSeries:
    """``Pi^s = [[k_s y, -k_s], [y, -1]] / (k_s y - 1)`` with ``y = 1/k_u``, expanded in ``1/z``."""
    if series.kind == "matrix":
        return series
    y, k = series.ku_inv, series.ks
    one = np.zeros_like(y)
    one[0] = 1.0
    ky = _mul(k, y)
    inv = _reciprocal(ky - one)
    mats = np.empty((len(y), 2, 2), dtype=complex)
    mats[:, 0, 0] = _mul(inv, ky)
    mats[:, 0, 1] = -_mul(inv, k)
    mats[:, 1, 0] = _mul(inv, y)
    mats[:, 1, 1] = -inv
    return KernelSeries("matrix", series.n_max, 1, 1, matrices=mats, label=series.label)


@dataclass
class AlgebraicCheck:
    max_defect: float
    passed: bool
    defects: np.ndarray


def check_algebraic_constraints(series: KernelSeries, tol: float = 1e-9) -> AlgebraicCheck:
    """Defects ``|Pi_n - sum_m Pi_m Pi_{n-m}|`` (spectral norm)."""
    mats = scalar_to_matrix(series).matrices
    defects = np.empty(len(mats))
    for n in range(len(mats)):
        conv = np.einsum("mij,mjk->ik", mats[: n + 1], mats[n::-1])
        defects[n] = np.linalg.norm(mats[n] - conv, 2)
    worst = float(np.max(defects))
    return AlgebraicCheck(worst, worst <= tol, defects)


@dataclass
class CompatibilityData:
    g_seq: np.ndarray
    defects: np.ndarray
    compatible: bool
    solution: np.ndarray  # x_n := g_n solves sum_m Pi_{n-m} x_m = g_n when compatible


def kernel_apply(mats: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Causal convolution ``y_n = sum_{m<=n} Pi_{n-m} h_m``."""
    N = len(h)
    out = np.zeros_like(h, dtype=complex)
    for n in range(N):
        out[n] = np.einsum("mij,mj->i", mats[n::-1][: n + 1], h[: n + 1])
    return out


def compatibility_check(series: KernelSeries, g_seq, tol: float = 1e-10) -> CompatibilityData:
    g = np.asarray(g_seq, dtype=complex)
    mats = series.padded(len(g))
    y = kernel_apply(mats, g)
    defects = np.linalg.norm(g - y, axis=1) if len(g) else np.zeros(0)
    scale = max(1.0, float(np.max(np.linalg.norm(g, axis=1)))) if len(g) else 1.0
    ok = bool(np.all(defects <= tol * scale))
    return CompatibilityData(g, defects, ok, g.copy())


def project_compatible(series: KernelSeries, g_seq) -> tuple[np.ndarray, float]:
    """Map ``g`` to ``Pi * g``, which is compatible by the algebraic constraints."""
    g = np.asarray(g_seq, dtype=complex)
    proj = kernel_apply(series.padded(len(g)), g)
    return proj, float(np.linalg.norm(proj - g))


def initial_boundary_data(series: KernelSeries, f_traces) -> np.ndarray:
    """``g^n = sum_{m<=n} Pi_{n-m} trace(f^m)`` for the initial levels."""
    f = np.asarray(f_traces, dtype=complex)
    return kernel_apply(series.padded(len(f)), f)


def kernel_to_csv(series: KernelSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if series.kind == "scalar":
        w.writerow(["n", "ku_inv_re", "ku_inv_im", "ks_re", "ks_im"])
        for n in range(series.n_max + 1):
            y, k = series.ku_inv[n], series.ks[n]
            w.writerow([n, f"{y.real:.17g}", f"{y.imag:.17g}", f"{k.real:.17g}", f"{k.imag:.17g}"])
    else:
        w.writerow(["n", "i", "j", "re", "im"])
        for n, mat in enumerate(series.matrices):
            for i in range(mat.shape[0]):
                for j in range(mat.shape[1]):
                    v = mat[i, j]
                    w.writerow([n, i, j, f"{v.real:.17g}", f"{v.imag:.17g}"])
    return buf.getvalue()
