"""Monomial orthonormal basis of weighted Bergman spaces on Reinhardt domains.

For a multi-index ``p`` the normalization constant is

    alpha_p = ( int_tau r^{2p} mu(r) prod r_k dr_k )^{-1/2},

the functions ``e_p(z) = (2 pi)^{-n/2} alpha_p z^p`` form an orthonormal
basis, and the Bergman kernel is ``K(z, w) = (2 pi)^{-n} sum alpha_p^2 z^p
conj(w)^p``.  The coefficient maps ``R`` (function -> coefficients) and
``R*`` (coefficients -> function) realize the isometry with ``l_2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from .domains import DomainError, DomainSpec, MultiIndex, multi_index, multi_indices
from .quadrature import integrate_base, integrate_full_polar

LOG_2PI = math.log(2 * math.pi)


def default_truncation(n: int) -> int:
    return 12 if n <= 2 else 8


def monomial_powers(r: np.ndarray, powers: np.ndarray) -> np.ndarray:
    """``prod_k r_k ** powers[j, k]`` for every row of ``powers``; ``0**0 == 1``."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        logr = np.log(r)
    # 0 * -inf is nan; zero exponents must contribute exactly 1
    terms = np.where(powers[None, :, :] == 0, 0.0, logr[:, None, :] * powers[None, :, :])
    return np.exp(terms.sum(axis=-1))


@dataclass(frozen=True)
class NormalizationTable:
    """``alpha_p`` for all ``|p| <= truncation``.

    ``values`` holds the quadrature result (or the closed form when
    ``method == 'gamma-closed-form'``); ``closed_form`` holds the catalog
    Gamma-function values when the domain has them.
    """

    domain: DomainSpec
    truncation: int
    indices: tuple[MultiIndex, ...]
    values: np.ndarray
    method: str
    err_estimate: np.ndarray
    converged: np.ndarray
    closed_form: np.ndarray | None = None
    position: Mapping[MultiIndex, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "position", {p: i for i, p in enumerate(self.indices)})
        if np.any(~(self.values > 0)):
            raise DomainError("normalization constants must be positive")

    def __len__(self):
        return len(self.indices)

    def __getitem__(self, p) -> float:
        return float(self.values[self.index(p)])

    def index(self, p) -> int:
        p = tuple(int(v) for v in p)
        try:
            return self.position[p]
        except KeyError:
            raise DomainError(f"multi-index {p} is outside the truncation |p| <= {self.truncation}") from None

    @property
    def powers(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=float)

    @property
    def failed_indices(self) -> list[MultiIndex]:
        return [p for p, ok in zip(self.indices, self.converged) if not ok]

    def closed_form_deviation(self) -> float | None:
        """Largest relative gap between quadrature and closed-form alphas."""
        if self.closed_form is None:
            return None
        return float(np.max(np.abs(self.values / self.closed_form - 1.0)))

    def as_dict(self) -> dict[MultiIndex, float]:
        return {p: float(v) for p, v in zip(self.indices, self.values)}


def ball_alpha(p: Sequence[int], lam: float) -> float:
    """Closed form of alpha_p on the unit ball with weight ``c_lambda (1-|z|^2)^lambda``."""
    p = multi_index(p)
    n = len(p)
    logval = 0.5 * (n * LOG_2PI + gammaln(n + sum(p) + lam + 1)
                    - float(np.sum(gammaln(np.asarray(p) + 1.0))) - gammaln(n + lam + 1))
    return math.exp(logval)


def compute_alpha(domain: DomainSpec, P: int, method: str = "quadrature", rel_tol: float = 1e-12,
                  square: bool = True, max_cells: int = 4000) -> NormalizationTable:
    """Normalization constants for ``|p| <= P``.

    ``method='quadrature'`` integrates every moment (all at once, as a vector
    integrand) and also stores the catalog closed form when one exists;
    ``method='gamma-closed-form'`` uses the closed form only.
    """
    if P < 0:
        raise DomainError("truncation must be non-negative")
    indices = tuple(multi_indices(domain.n, P))
    powers = np.asarray(indices, dtype=float)
    closed = None
    if domain.log_moment is not None:
        closed = np.exp(-0.5 * np.array([domain.log_moment(p) for p in indices]))
    if method == "gamma-closed-form":
        if closed is None:
            raise DomainError(f"{domain.name} has no closed-form normalization")
        zeros = np.zeros(len(indices))
        return NormalizationTable(domain, P, indices, closed, method, zeros,
                                  np.ones(len(indices), bool), closed)
    if method != "quadrature":
        raise DomainError(f"unknown normalization method {method!r}")

    def moments(r):
        return monomial_powers(r, 2 * powers) * domain.weight(r)[:, None]

    res = integrate_base(moments, domain, rel_tol=rel_tol, abs_tol=0.0,
                         max_cells=max_cells, square=square)
    value = np.atleast_1d(res.value)
    err = np.atleast_1d(res.error_estimate)
    ok = err <= rel_tol * np.abs(value) * 1.0000001 if not res.converged else np.ones(len(indices), bool)
    alpha = value ** -0.5
    # relative error of m^{-1/2} is half that of m
    return NormalizationTable(domain, P, indices, alpha, "quadrature", 0.5 * err / value, ok, closed)


# --------------------------------------------------------------------------
# coefficient vectors, basis, R and R*


@dataclass
class CoefficientVector:
    """Finitely supported coefficients ``{c_p}``."""

    entries: dict[MultiIndex, complex]

    @classmethod
    def from_array(cls, table: NormalizationTable, values: Sequence[complex]) -> "CoefficientVector":
        values = np.asarray(values, dtype=complex)
        if values.shape != (len(table),):
            raise DomainError("coefficient array does not match the table")
        return cls({p: complex(v) for p, v in zip(table.indices, values)})

    @classmethod
    def unit(cls, p: Sequence[int]) -> "CoefficientVector":
        return cls({tuple(int(v) for v in p): 1.0 + 0j})

    def to_array(self, table: NormalizationTable) -> np.ndarray:
        out = np.zeros(len(table), dtype=complex)
        for p, v in self.entries.items():
            out[table.index(p)] = v
        return out

    def norm(self) -> float:
        return float(np.sqrt(sum(abs(v) ** 2 for v in self.entries.values())))


def _as_points(z) -> np.ndarray:
    if hasattr(z, "z"):
        z = z.z
    return np.asarray(z, dtype=complex)


def _monomials(table: NormalizationTable, z: np.ndarray) -> np.ndarray:
    """``z^p`` for every table index; ``z`` has shape (..., n)."""
    n = table.domain.n
    if z.shape[-1] != n:
        raise DomainError(f"points must have {n} coordinates")
    lead = z.shape[:-1]
    flat = z.reshape(-1, n)
    out = np.ones((flat.shape[0], len(table)), dtype=complex)
    P = table.truncation
    pw = np.ones((flat.shape[0], n, P + 1), dtype=complex)
    for e in range(1, P + 1):
        pw[:, :, e] = pw[:, :, e - 1] * flat
    idx = np.asarray(table.indices)
    for k in range(n):
        out *= pw[:, k, idx[:, k]]
    return out.reshape(lead + (len(table),))


def basis_values(table: NormalizationTable, z) -> np.ndarray:
    """All basis functions ``e_p(z)``; trailing axis follows ``table.indices``."""
    z = _as_points(z)
    scale = (2 * math.pi) ** (-table.domain.n / 2)
    return scale * table.values * _monomials(table, z)


def basis_eval(table: NormalizationTable, p: Sequence[int], z) -> complex | np.ndarray:
    i = table.index(p)
    out = basis_values(table, z)[..., i]
    return complex(out) if np.ndim(out) == 0 else out


def apply_Rstar(table: NormalizationTable, c, z) -> complex | np.ndarray:
    """``(2 pi)^{-n/2} sum alpha_p c_p z^p``."""
    coeffs = c.to_array(table) if isinstance(c, CoefficientVector) else np.asarray(c, dtype=complex)
    if coeffs.shape != (len(table),):
        raise DomainError("coefficients must be supported within the truncation")
    out = basis_values(table, z) @ coeffs
    return complex(out) if np.ndim(out) == 0 else out


def apply_R(table: NormalizationTable, f: Callable[[np.ndarray], np.ndarray], n_theta: int | None = None,
            rel_tol: float = 1e-10, max_cells: int = 4000) -> CoefficientVector:
    """``c_p = (2 pi)^{-n/2} alpha_p int_D f(z) conj(z)^p mu(|z|) dv(z)`` for ``|p| <= P``.

    ``f`` is evaluated on complex arrays of shape (..., n).  The trapezoid
    torus rule with ``n_theta`` nodes per angle is exact when the angular
    frequencies of ``f conj(z)^p`` stay below ``n_theta``.
    """
    domain = table.domain
    n_theta = n_theta or 4 * table.truncation + 5
    scale = (2 * math.pi) ** (-domain.n / 2)

    def integrand(z):
        fz = np.asarray(f(z))
        w = domain.weight(np.abs(z))
        return (fz * w)[..., None] * np.conj(_monomials(table, z))

    res = integrate_full_polar(integrand, domain, n_theta=n_theta, rel_tol=rel_tol, max_cells=max_cells)
    coeffs = scale * table.values * np.atleast_1d(res.value)
    return CoefficientVector.from_array(table, coeffs)


def inner_product(domain: DomainSpec, f, g, n_theta: int = 33, rel_tol: float = 1e-10) -> complex:
    """``<f, g> = int_D f conj(g) mu dv`` by full-domain quadrature."""
    def integrand(z):
        return np.asarray(f(z)) * np.conj(np.asarray(g(z))) * domain.weight(np.abs(z))

    return complex(integrate_full_polar(integrand, domain, n_theta=n_theta, rel_tol=rel_tol).value)


def gram_matrix(table: NormalizationTable, n_theta: int | None = None, rel_tol: float = 1e-10) -> np.ndarray:
    """``G[q, p] = <e_p, e_q>`` over ``D``; the identity for an exact table."""
    domain = table.domain
    n_theta = n_theta or 4 * table.truncation + 5
    N = len(table)

    def integrand(z):
        e = basis_values(table, z)
        w = domain.weight(np.abs(z))[..., None, None]
        return (np.conj(e)[..., :, None] * e[..., None, :] * w).reshape(z.shape[:-1] + (N * N,))

    res = integrate_full_polar(integrand, domain, n_theta=n_theta, rel_tol=rel_tol)
    return np.asarray(res.value).reshape(N, N)


# --------------------------------------------------------------------------
# kernel


@dataclass(frozen=True)
class KernelSeries:
    """Truncated kernel ``(2 pi)^{-n} sum_{|p|<=P} alpha_p^2 z^p conj(w)^p``."""

    table: NormalizationTable

    @property
    def truncation(self) -> int:
        return self.table.truncation

    @property
    def n(self) -> int:
        return self.table.domain.n

    @property
    def log_coefficients(self) -> np.ndarray:
        return 2 * np.log(self.table.values) - self.n * LOG_2PI

    def __call__(self, z, zeta) -> complex | np.ndarray:
        return kernel_eval(self, z, zeta)

    def diagonal(self, r: np.ndarray) -> np.ndarray:
        """``K(z, z)`` as a function of the radii."""
        r = np.atleast_2d(np.asarray(r, dtype=float))
        terms = monomial_powers(r, 2 * self.table.powers) * np.exp(self.log_coefficients)
        return terms.sum(axis=1)

    def last_shell_magnitude(self, z, zeta) -> float:
        """Size of the ``|p| = P`` contribution, a heuristic truncation-error proxy."""
        z, zeta = _as_points(z), _as_points(zeta)
        mono = _monomials(self.table, z) * np.conj(_monomials(self.table, zeta))
        mask = np.asarray([sum(p) == self.truncation for p in self.table.indices])
        return float(np.abs((mono * np.exp(self.log_coefficients))[..., mask].sum(axis=-1)).max())

    def radial_partials(self, r: np.ndarray, order: Sequence[int]) -> float:
        """``d^order K(r) / dr^order`` for ``K(r) = sum c_p r^{2p}``, termwise."""
        r = np.asarray(r, dtype=float)
        order = np.asarray(order, dtype=int)
        powers = 2 * np.asarray(self.table.indices, dtype=int)
        factor = np.ones(len(powers))
        for k, a in enumerate(order):
            for i in range(a):
                factor = factor * (powers[:, k] - i)
        expo = (powers - order[None, :]).astype(float)
        live = factor != 0
        terms = monomial_powers(r[None, :], expo[live])[0] * factor[live]
        return float(np.sum(terms * np.exp(self.log_coefficients[live])))


def kernel_eval(series: KernelSeries, z, zeta) -> complex | np.ndarray:
    """Partial sum of the kernel series at ``(z, zeta)``.

    Terms are formed as ``exp(log c_p) * z^p conj(zeta)^p`` so large
    normalization constants never overflow on their own.
    """
    z, zeta = _as_points(z), _as_points(zeta)
    mono = _monomials(series.table, z) * np.conj(_monomials(series.table, zeta))
    out = (mono * np.exp(series.log_coefficients)).sum(axis=-1)
    return complex(out) if np.ndim(out) == 0 else out


def ball_kernel(z, zeta, lam: float = 0.0) -> complex | np.ndarray:
    """Closed-form weighted kernel of the unit ball, ``(1 - <z, zeta>)^{-(n+1+lambda)}``."""
    z, zeta = _as_points(z), _as_points(zeta)
    n = z.shape[-1]
    out = (1.0 - np.sum(z * np.conj(zeta), axis=-1)) ** (-(n + 1 + lam))
    return complex(out) if np.ndim(out) == 0 else out


def table_rows(table: NormalizationTable) -> tuple[list[str], list[list]]:
    """CSV columns ``p_1..p_n, alpha_p, method, err_estimate``."""
    n = table.domain.n
    header = [f"p_{k + 1}" for k in range(n)] + ["alpha_p", "method", "err_estimate"]
    rows = [list(p) + [float(a), table.method, float(e)]
            for p, a, e in zip(table.indices, table.values, table.err_estimate)]
    return header, rows
