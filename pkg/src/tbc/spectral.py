"""Companion matrix ``M(z)``, its stable/unstable split and the stable projector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur

from .errors import (
    AssumptionViolationError,
    CharacteristicBoundaryError,
    ClusteredEigenvaluesError,
    NearCircleError,
    UnsupportedSchemeError,
)
from .scheme import CIRCLE_TOL, SchemeDef, boundary_symbol_a, check_extreme_coefficients

GAP_TOL = 1e-6


@dataclass(frozen=True)
class CompanionM:
    z: complex
    eta: float
    r: int
    p: int
    matrix: np.ndarray

    @property
    def first_row(self) -> np.ndarray:
        return self.matrix[0]


@dataclass
class SpectralSplit:
    stable: list  # (kappa, eigenvector)
    unstable: list
    pi_s: np.ndarray
    min_gap: float
    circle_distance: float
    path: str  # "vandermonde" | "schur"


def _companion_from_symbols(a: np.ndarray, z, eta, r, p) -> CompanionM:
    """``a`` holds ``a_{-r} .. a_p``."""
    lead = a[-1]
    scale = max(1.0, float(np.max(np.abs(a))))
    if abs(lead) <= 1e-14 * scale:
        raise CharacteristicBoundaryError(f"a_p vanishes at z={z}, eta={eta}")
    n = p + r
    M = np.zeros((n, n), dtype=complex)
    M[0, :] = -a[-2::-1] / lead
    M[1:, :-1] += np.eye(n - 1)
    return CompanionM(z, eta, r, p, M)


def companion_M(scheme: SchemeDef, z: complex, eta: float = 0.0) -> CompanionM:
    """Spatial transfer matrix acting on ``(w_{j+p-1}, ..., w_{j-r})``."""
    sch = scheme.reduce(eta)
    a = np.array([boundary_symbol_a(sch, ell, z) for ell in range(-sch.r, sch.p + 1)])
    return _companion_from_symbols(a, complex(z), eta, sch.r, sch.p)


def companion_at_infinity(scheme: SchemeDef, eta: float = 0.0) -> CompanionM:
    """``M(infinity)`` built from the level-(s+1) coefficients."""
    sch = scheme.reduce(eta)
    a = sch.coeffs[:, sch.s + 1].copy()
    return _companion_from_symbols(a, complex("inf"), eta, sch.r, sch.p)


def _char_poly(M: np.ndarray) -> np.ndarray:
    """Descending coefficients of the characteristic polynomial of a companion matrix."""
    return np.concatenate(([1.0], -M[0]))


def _polish(poly: np.ndarray, roots: np.ndarray) -> np.ndarray:
    dpoly = np.polyder(poly)
    d = np.polyval(dpoly, roots)
    step = np.where(d != 0, np.polyval(poly, roots) / np.where(d != 0, d, 1), 0)
    return roots - step


def _rel_gap(kappas: np.ndarray) -> float:
    if len(kappas) < 2:
        return float("inf")
    diff = np.abs(kappas[:, None] - kappas[None, :])
    scale = np.maximum(np.abs(kappas)[:, None], np.abs(kappas)[None, :])
    rel = diff / np.where(scale > 0, scale, 1)
    rel[np.diag_indices(len(kappas))] = np.inf
    return float(np.min(rel))


def _vandermonde(kappas: np.ndarray) -> np.ndarray:
    n = len(kappas)
    return kappas[None, :] ** np.arange(n - 1, -1, -1)[:, None]


def stable_projector_vandermonde(stable, unstable, gap_tol: float = GAP_TOL) -> np.ndarray:
    """``V diag(I_r, 0) V^{-1}`` with Vandermonde columns ``(k^{n-1}, ..., 1)``."""
    kappas = np.concatenate([np.asarray(stable, dtype=complex), np.asarray(unstable, dtype=complex)])
    if _rel_gap(kappas) <= gap_tol:
        raise ClusteredEigenvaluesError("eigenvalues too close for the Vandermonde path")
    r = len(stable)
    V = _vandermonde(kappas)
    Vinv = np.linalg.inv(V)
    return V[:, :r] @ Vinv[:r, :]


def _schur_projector(M: np.ndarray, r: int) -> np.ndarray:
    _, Zs, ks = schur(M.astype(complex), output="complex", sort=lambda x: abs(x) < 1)
    _, Zu, ku = schur(M.astype(complex), output="complex", sort=lambda x: abs(x) > 1)
    if ks != r:
        raise AssumptionViolationError(f"Schur split found {ks} stable eigenvalues, expected {r}")
    B = np.hstack([Zs[:, :r], Zu[:, :ku]])
    return B[:, :r] @ np.linalg.inv(B)[:r, :]


def split_spectrum(M: CompanionM, tol: float = CIRCLE_TOL, boundary: bool = False) -> SpectralSplit:
    """Classify eigenvalues of ``M`` by modulus and build ``Pi^s``.

    With ``boundary=True`` near-circle eigenvalues are classified by modulus
    instead of raising, and the conditioning fields tell the caller how close
    the spectrum came to the circle.
    """
    A = M.matrix
    n = A.shape[0]
    poly = _char_poly(A)
    kappas = _polish(poly, np.linalg.eigvals(A))
    dist = float(np.min(np.abs(np.abs(kappas) - 1)))
    if dist < tol and not boundary:
        raise NearCircleError(f"eigenvalue within {tol} of the unit circle at z={M.z}")
    order = np.argsort(np.abs(kappas), kind="stable")
    kappas = kappas[order]
    n_stable = int(np.sum(np.abs(kappas) < 1))
    if n_stable != M.r and not boundary:
        raise AssumptionViolationError(
            f"found {n_stable} stable / {n - n_stable} unstable roots at z={M.z}, expected {M.r}/{M.p}"
        )
    gap = _rel_gap(kappas)
    if gap > GAP_TOL:
        pi_s = stable_projector_vandermonde(kappas[:n_stable], kappas[n_stable:])
        path = "vandermonde"
    else:
        pi_s = _schur_projector(A, n_stable)
        path = "schur"
    vecs = _vandermonde(kappas)
    pairs = [(complex(k), vecs[:, i] / np.linalg.norm(vecs[:, i])) for i, k in enumerate(kappas)]
    return SpectralSplit(pairs[:n_stable], pairs[n_stable:], pi_s, gap, dist, path)


def stable_projector(scheme: SchemeDef, z: complex, eta: float = 0.0, boundary: bool = False) -> np.ndarray:
    return split_spectrum(companion_M(scheme, z, eta), boundary=boundary).pi_s


def projector_at_infinity(scheme: SchemeDef, eta: float = 0.0) -> np.ndarray:
    sch = scheme.reduce(eta)
    if check_extreme_coefficients(sch) == "fail":
        raise UnsupportedSchemeError("technical restriction on the extreme coefficients fails")
    if sch.explicit:
        P = np.zeros((sch.size, sch.size), dtype=complex)
        P[sch.p:, sch.p:] = np.eye(sch.r)
        return P
    return split_spectrum(companion_at_infinity(sch)).pi_s


def stable_projector_batch(scheme: SchemeDef, zs: np.ndarray, eta: float = 0.0) -> np.ndarray:
    """Vectorized ``Pi^s`` over many ``z``; clustered points fall back to the scalar path."""
    sch = scheme.reduce(eta)
    zs = np.asarray(zs, dtype=complex)
    r, p = sch.r, sch.p
    n = r + p
    a = np.stack([boundary_symbol_a(sch, ell, zs) for ell in range(-r, p + 1)], axis=-1)
    lead = a[:, -1]
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.any(np.abs(lead) <= 1e-14 * scale):
        bad = zs[np.argmin(np.abs(lead))]
        raise CharacteristicBoundaryError(f"a_p vanishes at z={bad}")
    rows = -a[:, -2::-1] / lead[:, None]
    M = np.zeros((len(zs), n, n), dtype=complex)
    M[:, 0, :] = rows
    for i in range(1, n):
        M[:, i, i - 1] = 1.0
    kappas = np.linalg.eigvals(M)
    # one Newton step on the characteristic polynomial
    pk = np.ones_like(kappas)
    dk = np.zeros_like(kappas)
    for c in rows.T:
        dk = dk * kappas + pk
        pk = pk * kappas - c[:, None]
    kappas = kappas - np.where(dk != 0, pk / np.where(dk != 0, dk, 1), 0)
    mods = np.abs(kappas)
    if np.min(np.abs(mods - 1)) < CIRCLE_TOL:
        bad = zs[np.argmin(np.min(np.abs(mods - 1), axis=1))]
        raise NearCircleError(f"eigenvalue within {CIRCLE_TOL} of the unit circle at z={bad}")
    counts = np.sum(mods < 1, axis=1)
    if np.any(counts != r):
        bad = zs[np.argmax(counts != r)]
        raise AssumptionViolationError(f"stable count differs from r={r} at z={bad}")
    order = np.argsort(mods, axis=1, kind="stable")
    kappas = np.take_along_axis(kappas, order, axis=1)
    V = kappas[:, None, :] ** np.arange(n - 1, -1, -1)[None, :, None]
    diff = np.abs(kappas[:, :, None] - kappas[:, None, :])
    scl = np.maximum(np.abs(kappas)[:, :, None], np.abs(kappas)[:, None, :])
    rel = np.where(np.eye(n, dtype=bool)[None], np.inf, diff / scl)
    clustered = np.min(rel.reshape(len(zs), -1), axis=1) <= GAP_TOL
    out = np.empty((len(zs), n, n), dtype=complex)
    good = ~clustered
    if np.any(good):
        Vinv = np.linalg.inv(V[good])
        out[good] = V[good][:, :, :r] @ Vinv[:, :r, :]
    for k in np.nonzero(clustered)[0]:
        out[k] = _schur_projector(M[k], r)
    return out
