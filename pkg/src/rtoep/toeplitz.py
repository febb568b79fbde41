"""Toeplitz operators with separately radial symbols.

On the monomial basis a separately radial symbol ``a`` acts diagonally,

    T_a e_p = gamma_a(p) e_p,   gamma_a(p) = alpha_p^2 int_tau a(r) r^{2p} mu(r) prod r_k dr_k,

so the spectral data of ``T_a`` are read off the sequence ``gamma_a``.  The
brute-force oracle integrates ``<a e_p, e_q>`` over the whole domain and is
independent of that structure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .bergman import NormalizationTable, basis_values, compute_alpha, monomial_powers
from .domains import DomainError, DomainSpec, MultiIndex, SymbolSpec, catalog_lookup, multi_indices
from .quadrature import integrate_base, integrate_full_polar, integrate_simplex


@dataclass(frozen=True)
class GammaSequence:
    domain: DomainSpec
    symbol: SymbolSpec
    truncation: int
    indices: tuple[MultiIndex, ...]
    values: np.ndarray
    err_estimate: np.ndarray
    converged: np.ndarray
    method: str = "base"

    def __getitem__(self, p) -> float:
        p = tuple(int(v) for v in p)
        try:
            return float(self.values[self.indices.index(p)])
        except ValueError:
            raise DomainError(f"multi-index {p} is outside the truncation") from None

    def __len__(self):
        return len(self.indices)

    @property
    def failed_indices(self) -> list[MultiIndex]:
        return [p for p, ok in zip(self.indices, self.converged) if not ok]

    def shell_values(self, order: int) -> np.ndarray:
        return np.array([v for p, v in zip(self.indices, self.values) if sum(p) == order])

    def rows(self) -> tuple[list[str], list[list]]:
        header = [f"p_{k + 1}" for k in range(self.domain.n)] + ["gamma"]
        return header, [list(p) + [float(v)] for p, v in zip(self.indices, self.values)]


def _require_radial(a: SymbolSpec):
    if not a.is_radial:
        raise DomainError("the diagonal formula needs a separately radial symbol")


def _per_index_ok(res, rel_tol, count):
    if res.converged:
        return np.ones(count, bool)
    value = np.atleast_1d(res.value)
    return np.atleast_1d(res.error_estimate) <= rel_tol * np.abs(value)


def compute_gamma(domain: DomainSpec, a: SymbolSpec, P: int, table: NormalizationTable | None = None,
                  rel_tol: float = 1e-12, max_cells: int = 6000) -> GammaSequence:
    """``gamma_a(p)`` for ``|p| <= P`` by base quadrature in the radii.

    The weighted moments of ``a`` are integrated directly in ``r`` (splitting
    at the symbol's jump radii) and multiplied by ``alpha_p^2`` from the
    table, which is computed in the squared variables; ``a = 1`` therefore
    compares two quadrature routes.
    """
    _require_radial(a)
    if table is None:
        table = compute_alpha(domain, P)
    elif table.domain is not domain or table.truncation < P:
        raise DomainError("normalization table does not cover this domain and truncation")
    indices = tuple(multi_indices(domain.n, P))
    powers = np.asarray(indices, dtype=float)
    alpha = np.array([table[p] for p in indices])

    def moments(r):
        return monomial_powers(r, 2 * powers) * (a(r) * domain.weight(r))[:, None]

    res = integrate_base(moments, domain, rel_tol=rel_tol, abs_tol=0.0, max_cells=max_cells,
                         breaks=a.breaks)
    values = alpha ** 2 * np.atleast_1d(res.value)
    err = alpha ** 2 * np.atleast_1d(res.error_estimate)
    return GammaSequence(domain, a, P, indices, values, err,
                         _per_index_ok(res, rel_tol, len(indices)), "base")


def compute_gamma_ball(n: int, lam: float, a: SymbolSpec, P: int, rel_tol: float = 1e-12) -> GammaSequence:
    """``gamma`` on the weighted unit ball from the simplex representation

        gamma(p) = Gamma(n+|p|+lam+1) / (p! Gamma(lam+1)) int_Delta a(sqrt s) s^p (1 - sum s)^lam ds.
    """
    _require_radial(a)
    domain = catalog_lookup("ball-lambda", n, {"lambda": lam})
    indices = tuple(multi_indices(n, P))
    powers = np.asarray(indices, dtype=float)
    idx = np.asarray(indices)
    log_pref = (gammaln(n + idx.sum(axis=1) + lam + 1) - gammaln(idx + 1.0).sum(axis=1) - gammaln(lam + 1))

    def integrand(s):
        return monomial_powers(s, powers) * a(np.sqrt(s))[:, None]

    breaks = [b * b for b in a.breaks]
    res = integrate_simplex(integrand, n, lam, rel_tol=rel_tol, abs_tol=0.0, breaks=breaks,
                           root_coordinates=True)
    pref = np.exp(log_pref)
    values = pref * np.atleast_1d(res.value)
    err = pref * np.atleast_1d(res.error_estimate)
    return GammaSequence(domain, a, P, indices, values, err,
                         _per_index_ok(res, rel_tol, len(indices)), "simplex")


# --------------------------------------------------------------------------
# matrices


@dataclass(frozen=True)
class OperatorMatrix:
    """Matrix ``M[q, p] = <T_a e_p, e_q>`` over the truncated basis."""

    entries: np.ndarray
    indices: tuple[MultiIndex, ...]
    symbol: SymbolSpec | None
    method: str
    domain_name: str = ""

    @property
    def shape(self):
        return self.entries.shape

    def off_diagonal_max(self) -> float:
        off = self.entries - np.diag(np.diag(self.entries))
        return float(np.abs(off).max()) if off.size else 0.0

    def hermitian_defect(self) -> float:
        return float(np.abs(self.entries - self.entries.conj().T).max())


def diagonal_matrix(g: GammaSequence) -> OperatorMatrix:
    return OperatorMatrix(np.diag(g.values.astype(complex)), g.indices, g.symbol,
                          "diagonal-from-gamma", g.domain.name)


def matrix_oracle(domain: DomainSpec, a: SymbolSpec, P: int, table: NormalizationTable | None = None,
                  n_theta: int | None = None, rel_tol: float = 1e-10, max_cells: int = 4000) -> OperatorMatrix:
    """Brute-force ``<a e_p, e_q>`` by integration over the whole domain.

    ``n_theta = 4P + 5`` torus nodes keep the angular integration exact for
    the polynomial part; the symbol's jump radii split the radial panels.
    """
    if table is None:
        table = compute_alpha(domain, P)
    if table.truncation != P:
        table = compute_alpha(domain, P)
    N = len(table)
    n_theta = n_theta or 4 * P + 5

    def integrand(z):
        e = basis_values(table, z)
        w = (a.evaluate_full(z) * domain.weight(np.abs(z)))[..., None, None]
        return (np.conj(e)[..., :, None] * e[..., None, :] * w).reshape(z.shape[:-1] + (N * N,))

    res = integrate_full_polar(integrand, domain, n_theta=n_theta, rel_tol=rel_tol,
                               max_cells=max_cells, breaks=a.breaks)
    entries = np.asarray(res.value).reshape(N, N)
    return OperatorMatrix(entries, table.indices, a, "oracle-integration", domain.name)


def commutator_norm(A: OperatorMatrix, B: OperatorMatrix) -> float:
    """Frobenius norm of ``AB - BA``."""
    if A.shape != B.shape or A.indices != B.indices:
        raise ValueError(f"operator matrices do not share a truncation: {A.shape} vs {B.shape}")
    if A.domain_name and B.domain_name and A.domain_name != B.domain_name:
        raise ValueError("operator matrices live on different domains")
    C = A.entries @ B.entries - B.entries @ A.entries
    return float(np.linalg.norm(C, "fro"))


# --------------------------------------------------------------------------
# spectral data


@dataclass(frozen=True)
class SpectralReport:
    """Finite-truncation spectral summary of a diagonal Toeplitz operator.

    All sets are estimates from ``|p| <= P``: the spectrum sample
    under-approximates the closure of the full value set and the essential
    part clusters the outer shells only.
    """

    operator_norm_estimate: float
    spectrum_sample: list[float]
    essential_spectrum_estimate: list[float]
    compactness_verdict: bool
    shell_trend: list[float]
    truncation: int

    def as_json(self) -> dict:
        return {"norm": self.operator_norm_estimate, "spectrum": self.spectrum_sample,
                "essential": self.essential_spectrum_estimate, "compact": self.compactness_verdict,
                "shell_trend": self.shell_trend, "truncation": self.truncation}


def cluster_values(values: Sequence[float], gap: float) -> list[float]:
    """Split sorted values wherever consecutive entries differ by more than ``gap``; return cluster means."""
    vals = np.sort(np.asarray(values, dtype=float))
    if vals.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(vals) > gap) + 1
    return [float(c.mean()) for c in np.split(vals, cuts)]


def spectral_report(g: GammaSequence, gap: float = 1e-3, compact_threshold: float = 1e-4,
                    outer_shells: int = 3, distinct_tol: float = 1e-12) -> SpectralReport:
    if len(g) == 0:
        raise DomainError("empty sequence")
    P = g.truncation
    mags = np.abs(g.values)
    trend = [float(np.max(np.abs(g.shell_values(k)))) for k in range(P + 1)]
    spectrum = cluster_values(g.values, distinct_tol * max(1.0, float(mags.max())))
    outer = np.concatenate([g.shell_values(k) for k in range(max(0, P - outer_shells + 1), P + 1)])
    return SpectralReport(
        operator_norm_estimate=float(mags.max()),
        spectrum_sample=spectrum,
        essential_spectrum_estimate=cluster_values(outer, gap),
        compactness_verdict=bool(trend[-1] < compact_threshold),
        shell_trend=trend,
        truncation=P,
    )


def disk_power_gamma(p: int, lam: float = 0.0) -> float:
    """Closed form for ``a = |z|^2`` on the weighted disk: ``(p+1)/(p+lam+2)``."""
    return (p + 1) / (p + lam + 2)


def log_gamma_prefactor(n: int, lam: float, p: Sequence[int]) -> float:
    p = np.asarray(p)
    return float(gammaln(n + p.sum() + lam + 1) - gammaln(p + 1.0).sum() - gammaln(lam + 1))


__all__ = [
    "GammaSequence", "OperatorMatrix", "SpectralReport", "compute_gamma", "compute_gamma_ball",
    "matrix_oracle", "diagonal_matrix", "commutator_norm", "spectral_report", "cluster_values",
    "disk_power_gamma", "log_gamma_prefactor",
]
