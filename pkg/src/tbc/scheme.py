"""Scheme data model, symbols, amplification matrix and assumption audit.

A scheme is the recurrence ``sum_sigma Q_sigma u^{n+sigma} = dt F`` with
``Q_sigma = sum_{ell=-r}^{p} a[ell, sigma] S^ell`` and ``(S u)_j = u_{j+1}``.
Multi-dimensional schemes enter as one 1-D table per tangential frequency.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    DegenerateStencilError,
    DomainError,
    IndexInconclusiveError,
    ParameterError,
    SchemeParseError,
    SingularSymbolError,
)

CIRCLE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SchemeDef:
    """Coefficient table ``coeffs[ell + r, sigma]`` of a multi-level scheme.

    ``tangential_symbol`` maps a tangential frequency to a replacement table;
    ``coeffs`` then holds the table at ``eta = 0``.
    """

    s: int
    r: int
    p: int
    coeffs: np.ndarray
    label: str = ""
    tangential_symbol: Callable[[float], np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.s < 0 or self.r < 0 or self.p < 0:
            raise ParameterError("s, r, p must be nonnegative")
        if self.p + self.r < 1:
            raise ParameterError("stencil must satisfy p + r >= 1")
        table = np.array(self.coeffs, dtype=complex)
        if table.shape != (self.p + self.r + 1, self.s + 2):
            raise ParameterError(
                f"coefficient table has shape {table.shape}, expected {(self.p + self.r + 1, self.s + 2)}"
            )
        if not np.all(np.isfinite(table)):
            raise ParameterError("coefficients must be finite")
        table.setflags(write=False)
        object.__setattr__(self, "coeffs", table)

    @classmethod
    def from_entries(cls, s, r, p, entries, label="", tangential_symbol=None):
        """Build from ``{(ell, sigma): value}``; missing entries are zero."""
        table = np.zeros((p + r + 1, s + 2), dtype=complex)
        for (ell, sigma), value in entries.items():
            if not (-r <= ell <= p and 0 <= sigma <= s + 1):
                raise ParameterError(f"entry ({ell}, {sigma}) outside the stencil")
            table[ell + r, sigma] = value
        return cls(s, r, p, table, label, tangential_symbol)

    def a(self, ell: int, sigma: int) -> complex:
        return complex(self.coeffs[ell + self.r, sigma])

    @property
    def size(self) -> int:
        return self.p + self.r

    @property
    def explicit(self) -> bool:
        top = np.zeros(self.p + self.r + 1, dtype=complex)
        top[self.r] = 1.0
        return bool(np.array_equal(self.coeffs[:, self.s + 1], top))

    def reduce(self, eta: float = 0.0) -> "SchemeDef":
        """The 1-D scheme seen at tangential frequency ``eta``."""
        if self.tangential_symbol is None:
            return self
        return SchemeDef(self.s, self.r, self.p, self.tangential_symbol(eta), self.label)


def _laurent(row: np.ndarray, r: int, kappa):
    """Evaluate ``sum_k row[k] kappa^{k-r}`` by Horner."""
    kappa = np.asarray(kappa, dtype=complex)
    acc = np.zeros_like(kappa)
    for c in row[::-1]:
        acc = acc * kappa + c
    return acc * kappa ** (-r)


def symbol_Q(scheme: SchemeDef, sigma: int, kappa, eta: float = 0.0):
    """Symbol ``sum_ell a[ell, sigma] kappa^ell``; accepts arrays of kappa."""
    if not 0 <= sigma <= scheme.s + 1:
        raise DomainError(f"sigma={sigma} outside [0, {scheme.s + 1}]")
    kappa_arr = np.asarray(kappa, dtype=complex)
    if np.any(kappa_arr == 0):
        raise DomainError("kappa = 0: negative powers undefined")
    out = _laurent(scheme.reduce(eta).coeffs[:, sigma], scheme.r, kappa_arr)
    return complex(out) if out.ndim == 0 else out


def dispersion_F(scheme: SchemeDef, kappa, z, eta: float = 0.0):
    """``F(kappa, z) = sum_sigma Q_sigma(kappa) z^sigma``."""
    sch = scheme.reduce(eta)
    z = np.asarray(z, dtype=complex)
    acc = np.zeros(np.broadcast(np.asarray(kappa), z).shape, dtype=complex)
    for sigma in range(sch.s + 1, -1, -1):
        acc = acc * z + symbol_Q(sch, sigma, kappa)
    return acc


def dispersion_dF(scheme: SchemeDef, kappa, z, eta: float = 0.0):
    """Partial derivatives ``(dF/dkappa, dF/dz)``."""
    sch = scheme.reduce(eta)
    kappa = np.asarray(kappa, dtype=complex)
    z = np.asarray(z, dtype=complex)
    ells = np.arange(-sch.r, sch.p + 1)
    dk = np.zeros(np.broadcast(kappa, z).shape, dtype=complex)
    dz = np.zeros_like(dk)
    for sigma in range(sch.s + 2):
        q = symbol_Q(sch, sigma, kappa)
        dq = sum(ell * sch.a(ell, sigma) * kappa ** (ell - 1) for ell in ells)
        dk = dk + dq * z**sigma
        if sigma > 0:
            dz = dz + sigma * q * z ** (sigma - 1)
    return dk, dz


def dispersion_roots(scheme: SchemeDef, kappa: complex, eta: float = 0.0) -> np.ndarray:
    """Roots ``z`` of ``F(kappa, z) = 0``; these are the eigenvalues of ``A(kappa)``."""
    sch = scheme.reduce(eta)
    lead = symbol_Q(sch, sch.s + 1, kappa)
    if abs(lead) <= 1e-14 * max(1.0, float(np.max(np.abs(sch.coeffs)))):
        raise SingularSymbolError(f"Q_(s+1) symbol vanishes at kappa={kappa}")
    poly = [symbol_Q(sch, sigma, kappa) for sigma in range(sch.s + 1, -1, -1)]
    return np.roots(poly)


def amplification(scheme: SchemeDef, kappa: complex, eta: float = 0.0) -> np.ndarray:
    """Companion matrix of the one-step recurrence on the Fourier side."""
    sch = scheme.reduce(eta)
    lead = symbol_Q(sch, sch.s + 1, kappa)
    if abs(lead) <= 1e-14 * max(1.0, float(np.max(np.abs(sch.coeffs)))):
        raise SingularSymbolError(f"Q_(s+1) symbol vanishes at kappa={kappa}")
    n = sch.s + 1
    A = np.zeros((n, n), dtype=complex)
    A[0, :] = [-symbol_Q(sch, sigma, kappa) / lead for sigma in range(sch.s, -1, -1)]
    A[1:, :-1] += np.eye(n - 1)
    return A


def _amplification_stack(sch: SchemeDef, kappas: np.ndarray) -> np.ndarray:
    n = sch.s + 1
    lead = symbol_Q(sch, sch.s + 1, kappas)
    scale = max(1.0, float(np.max(np.abs(sch.coeffs))))
    bad = np.abs(lead) <= 1e-14 * scale
    if np.any(bad):
        raise SingularSymbolError(f"Q_(s+1) symbol vanishes at kappa={kappas[bad][0]}")
    A = np.zeros((len(kappas), n, n), dtype=complex)
    for col, sigma in enumerate(range(sch.s, -1, -1)):
        A[:, 0, col] = -symbol_Q(sch, sigma, kappas) / lead
    for i in range(1, n):
        A[:, i, i - 1] = 1.0
    return A


@dataclass
class CauchyReport:
    passed: bool
    worst_kappa: complex
    worst_root: complex
    max_modulus: float
    power_bound: float
    reason: str = ""


def check_cauchy_stability(
    scheme: SchemeDef, torus_grid_size: int = 512, horizon: int = 200, eta: float = 0.0
) -> CauchyReport:
    """Sampled audit of uniform power boundedness of ``A(kappa)`` on the torus."""
    if torus_grid_size < 16:
        raise ParameterError("torus_grid_size must be >= 16")
    sch = scheme.reduce(eta)
    kappas = np.exp(2j * np.pi * np.arange(torus_grid_size) / torus_grid_size)
    A = _amplification_stack(sch, kappas)
    roots = np.linalg.eigvals(A)
    mods = np.abs(roots)
    k_idx, r_idx = np.unravel_index(np.argmax(mods), mods.shape)
    worst_kappa, worst_root = complex(kappas[k_idx]), complex(roots[k_idx, r_idx])
    max_mod = float(mods[k_idx, r_idx])

    reason = ""
    if max_mod > 1 + CIRCLE_TOL:
        reason = "root outside the closed unit disk"
    else:
        on_circle = np.abs(mods - 1) < CIRCLE_TOL
        for k in np.nonzero(on_circle.sum(axis=1) >= 2)[0]:
            rk = roots[k][on_circle[k]]
            gaps = np.abs(rk[:, None] - rk[None, :]) + np.eye(len(rk))
            if np.min(gaps) < 1e-6:
                worst_kappa, worst_root = complex(kappas[k]), complex(rk[0])
                reason = "multiple root on the unit circle"
                break

    P = np.broadcast_to(np.eye(sch.s + 1, dtype=complex), A.shape).copy()
    bound = 1.0
    for _ in range(horizon):
        P = P @ A
        bound = max(bound, float(np.max(np.linalg.norm(P, 2, axis=(1, 2)))))
        if not np.isfinite(bound) or bound > 1e12:
            break
    return CauchyReport(not reason, worst_kappa, worst_root, max_mod, bound, reason)


def winding_number(func: Callable[[np.ndarray], np.ndarray], samples: int = 256, max_depth: int = 12) -> int:
    """Winding number of ``theta -> func(e^{i theta})`` about 0 by accumulated argument."""
    thetas = 2 * np.pi * np.arange(samples + 1) / samples
    values = func(np.exp(1j * thetas))
    scale = float(np.max(np.abs(values)))
    total = 0.0

    def check(v):
        if np.any(np.abs(v) <= 1e-12 * scale):
            raise IndexInconclusiveError("symbol vanishes within tolerance on the sampled circle")

    check(values)

    def accumulate(t0, t1, v0, v1, depth):
        jump = np.angle(v1 / v0)
        if abs(jump) <= np.pi / 2 or depth >= max_depth:
            return jump
        tm = 0.5 * (t0 + t1)
        vm = func(np.exp(1j * np.array([tm])))[0]
        check(np.array([vm]))
        return accumulate(t0, tm, v0, vm, depth + 1) + accumulate(tm, t1, vm, v1, depth + 1)

    for k in range(samples):
        total += accumulate(thetas[k], thetas[k + 1], values[k], values[k + 1], 0)
    return int(round(total / (2 * np.pi)))


def check_index_condition(scheme: SchemeDef, eta: float = 0.0, samples: int = 256) -> int:
    """Winding number of ``Q_{s+1}`` along the unit circle; solvability needs 0."""
    sch = scheme.reduce(eta)
    return winding_number(lambda k: symbol_Q(sch, sch.s + 1, k), samples)


def boundary_symbol_a(scheme: SchemeDef, ell1: int, z, eta: float = 0.0):
    """``a_ell(z) = sum_sigma a[ell, sigma] z^sigma`` at tangential frequency eta."""
    sch = scheme.reduce(eta)
    if not -sch.r <= ell1 <= sch.p:
        raise DomainError(f"ell1={ell1} outside [-r, p]")
    z = np.asarray(z, dtype=complex)
    acc = np.zeros_like(z)
    for sigma in range(sch.s + 1, -1, -1):
        acc = acc * z + sch.coeffs[ell1 + sch.r, sigma]
    return complex(acc) if acc.ndim == 0 else acc


def boundary_poly_roots(scheme: SchemeDef, ell1: int, eta: float = 0.0) -> np.ndarray:
    sch = scheme.reduce(eta)
    row = sch.coeffs[ell1 + sch.r, :]
    if not np.any(row != 0):
        raise DegenerateStencilError(f"a_{ell1}(z) vanishes identically")
    desc = np.trim_zeros(row[::-1], "f")
    return np.roots(desc) if len(desc) > 1 else np.zeros(0, dtype=complex)


@dataclass
class NoncharacteristicResult:
    passed: bool
    strong: bool
    offending: list  # (ell, z) pairs


def check_noncharacteristic(scheme: SchemeDef, eta: float = 0.0, strong: bool = False) -> NoncharacteristicResult:
    """Roots of ``a_{-r}`` and ``a_p``: weak forbids ``|z| > 1``, strong also ``|z| = 1``."""
    sch = scheme.reduce(eta)
    offending = []
    for ell in sorted({-sch.r, sch.p}):
        for z in boundary_poly_roots(sch, ell):
            if abs(z) > 1 + CIRCLE_TOL or (strong and abs(z) >= 1 - CIRCLE_TOL):
                offending.append((ell, complex(z)))
    return NoncharacteristicResult(not offending, strong, offending)


def check_extreme_coefficients(scheme: SchemeDef, eta: float = 0.0) -> str:
    """Technical restriction: returns ``"i"`` (explicit), ``"ii"`` (implicit) or ``"fail"``."""
    sch = scheme.reduce(eta)
    level = sch.s if sch.explicit else sch.s + 1
    ok = (sch.r == 0 or sch.a(-sch.r, level) != 0) and (sch.p == 0 or sch.a(sch.p, level) != 0)
    if not ok:
        return "fail"
    return "i" if sch.explicit else "ii"


@dataclass
class AssumptionReport:
    label: str
    solvable: bool
    solvable_witness: complex | None
    index: dict
    cauchy: CauchyReport
    noncharacteristic_weak: NoncharacteristicResult
    noncharacteristic_strong: NoncharacteristicResult
    technical: str

    def to_dict(self) -> dict:
        def cx(z):
            return None if z is None else [z.real, z.imag]

        return {
            "label": self.label,
            "solvable": {"pass": self.solvable, "witness_kappa": cx(self.solvable_witness)},
            "index": {str(k): v for k, v in self.index.items()},
            "cauchy_stable": {
                "pass": self.cauchy.passed,
                "worst_kappa": cx(self.cauchy.worst_kappa),
                "worst_root": cx(self.cauchy.worst_root),
                "max_modulus": self.cauchy.max_modulus,
                "power_bound": self.cauchy.power_bound,
                "reason": self.cauchy.reason,
            },
            "noncharacteristic_weak": {
                "pass": self.noncharacteristic_weak.passed,
                "offending": [[ell, cx(z)] for ell, z in self.noncharacteristic_weak.offending],
            },
            "noncharacteristic_strong": {
                "pass": self.noncharacteristic_strong.passed,
                "offending": [[ell, cx(z)] for ell, z in self.noncharacteristic_strong.offending],
            },
            "technical": self.technical,
        }


def audit_assumptions(
    scheme: SchemeDef, eta: float = 0.0, grid: int = 512, horizon: int = 200, index_samples: int = 256
) -> AssumptionReport:
    sch = scheme.reduce(eta)
    kappas = np.exp(2j * np.pi * np.arange(grid) / grid)
    lead = np.abs(symbol_Q(sch, sch.s + 1, kappas))
    witness = None
    solvable = True
    if np.min(lead) <= 1e-12 * max(1.0, float(np.max(lead))):
        solvable, witness = False, complex(kappas[np.argmin(lead)])
    index = {}
    if solvable:
        index[eta] = check_index_condition(sch, 0.0, index_samples)
        solvable = index[eta] == 0
    try:
        cauchy = check_cauchy_stability(sch, grid, horizon)
    except SingularSymbolError:
        cauchy = CauchyReport(False, witness or 0j, 0j, float("inf"), float("inf"), "singular symbol")
    return AssumptionReport(
        sch.label,
        solvable,
        witness,
        index,
        cauchy,
        check_noncharacteristic(sch, 0.0, strong=False),
        check_noncharacteristic(sch, 0.0, strong=True),
        check_extreme_coefficients(sch),
    )


# presets ------------------------------------------------------------------


def _positive(name, value):
    if not value > 0:
        raise ParameterError(f"{name} must be positive, got {value}")


def _transport_ratio(mu, name):
    if mu == 0:
        raise ParameterError(f"{name}: mu must be nonzero")
    if abs(mu) > 1:
        warnings.warn(f"{name}: |mu|={abs(mu)} > 1 violates the stability range", stacklevel=3)


def lax_wendroff(mu: float) -> SchemeDef:
    _transport_ratio(mu, "lax_wendroff")
    if abs(mu) == 1:
        raise ParameterError("lax_wendroff: |mu| = 1 collapses the stencil")
    return SchemeDef.from_entries(
        0, 1, 1,
        {(-1, 0): -mu * (1 + mu) / 2, (0, 0): mu * mu - 1, (1, 0): mu * (1 - mu) / 2, (0, 1): 1.0},
        label=f"lax_wendroff(mu={mu!r})",
    )


def leap_frog(mu: float) -> SchemeDef:
    """``u^{n+2} - mu (u_{j+1} - u_{j-1})^{n+1} - u^n = 0``."""
    _transport_ratio(mu, "leap_frog")
    return SchemeDef.from_entries(
        1, 1, 1,
        {(-1, 1): mu, (1, 1): -mu, (0, 2): 1.0, (0, 0): -1.0},
        label=f"leap_frog(mu={mu!r})",
    )


def heat_explicit(mu: float) -> SchemeDef:
    """``u^{n+1} - u^n - mu (u_{j-1} - 2 u_j + u_{j+1})^n = 0``."""
    _positive("mu", mu)
    if mu > 0.5:
        warnings.warn(f"heat_explicit: mu={mu} > 1/2 violates the stability range", stacklevel=2)
    return SchemeDef.from_entries(
        0, 1, 1,
        {(-1, 0): -mu, (0, 0): 2 * mu - 1, (1, 0): -mu, (0, 1): 1.0},
        label=f"heat_explicit(mu={mu!r})",
    )


def heat_bdf2(mu: float) -> SchemeDef:
    _positive("mu", mu)
    return SchemeDef.from_entries(
        1, 1, 1,
        {(-1, 2): -mu, (0, 2): 1.5 + 2 * mu, (1, 2): -mu, (0, 1): -2.0, (0, 0): 0.5},
        label=f"heat_bdf2(mu={mu!r})",
    )


def cn_schrodinger(mu1: float, mu2: float) -> SchemeDef:
    """Crank-Nicolson Schroedinger, one 1-D table per tangential frequency."""
    _positive("mu1", mu1)
    _positive("mu2", mu2)

    def table(eta: float) -> np.ndarray:
        shift = mu2 * (2 * np.cos(eta) - 2)
        t = np.zeros((3, 2), dtype=complex)
        for sigma, unit in ((1, 1j), (0, -1j)):
            t[0, sigma] = mu1
            t[1, sigma] = unit - 2 * mu1 + shift
            t[2, sigma] = mu1
        return t

    return SchemeDef(0, 1, 1, table(0.0), f"cn_schrodinger(mu1={mu1!r}, mu2={mu2!r})", table)


def cn_airy(mu: float) -> SchemeDef:
    _positive("mu", mu)
    entries = {}
    for sigma, unit in ((1, 1.0), (0, -1.0)):
        entries[(-1, sigma)] = -mu
        entries[(0, sigma)] = unit + 3 * mu
        entries[(1, sigma)] = -3 * mu
        entries[(2, sigma)] = mu
    return SchemeDef.from_entries(0, 1, 2, entries, label=f"cn_airy(mu={mu!r})")


def cn_bbm(eps: float, c: float, dt: float, dx: float) -> SchemeDef:
    for name, v in (("eps", eps), ("dt", dt), ("dx", dx)):
        _positive(name, v)
    e = eps * dt / (2 * dx * dx)
    k = c * dt / (2 * dx)
    return SchemeDef.from_entries(
        0, 1, 1,
        {
            (-1, 1): -(e + k), (0, 1): 1 + 2 * e + k, (1, 1): -e,
            (-1, 0): e - k, (0, 0): -1 - 2 * e + k, (1, 0): e,
        },
        label=f"cn_bbm(eps={eps!r}, c={c!r}, dt={dt!r}, dx={dx!r})",
    )


PRESETS: dict[str, Callable[..., SchemeDef]] = {
    "lax_wendroff": lax_wendroff,
    "leap_frog": leap_frog,
    "heat_explicit": heat_explicit,
    "heat_bdf2": heat_bdf2,
    "cn_schrodinger": cn_schrodinger,
    "cn_airy": cn_airy,
    "cn_bbm": cn_bbm,
}


def presets() -> dict[str, Callable[..., SchemeDef]]:
    return dict(PRESETS)


def scheme_from_json(obj: dict) -> SchemeDef:
    """Parse the JSON scheme-file layout ``{label, s, r, p, coeffs: [{ell, sigma, re, im}]}``."""
    try:
        s, r, p = int(obj["s"]), int(obj["r"]), int(obj["p"])
        entries = {}
        for i, item in enumerate(obj["coeffs"]):
            try:
                key = (int(item["ell"]), int(item["sigma"]))
                entries[key] = complex(float(item.get("re", 0.0)), float(item.get("im", 0.0)))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemeParseError(f"coeffs[{i}]: {exc}") from exc
    except KeyError as exc:
        raise SchemeParseError(f"missing field {exc}") from exc
    return SchemeDef.from_entries(s, r, p, entries, label=str(obj.get("label", "")))


def scheme_to_json(scheme: SchemeDef) -> dict:
    coeffs = []
    for ell in range(-scheme.r, scheme.p + 1):
        for sigma in range(scheme.s + 2):
            v = scheme.a(ell, sigma)
            if v != 0:
                coeffs.append({"ell": ell, "sigma": sigma, "re": v.real, "im": v.imag})
    return {"label": scheme.label, "s": scheme.s, "r": scheme.r, "p": scheme.p, "coeffs": coeffs}
