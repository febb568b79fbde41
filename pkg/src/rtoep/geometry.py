"""Polar-coordinate geometry of the Bergman metric on Reinhardt domains.

With ``L(r) = log K(z, z)`` the real metric is block diagonal in polar
coordinates,

    h = sum_kl F_kl (dr_k dr_l + r_k r_l dtheta_k dtheta_l),
    F_kl = (1/4) (d_k d_l + delta_kl / r_k d_k) L,

so all the geometry of the torus-orbit foliation is driven by radial
derivatives of ``L``.  Kernel *sources* supply those derivatives: the
truncated series (termwise), closed forms for the ball and polydisk, a
boundary model ``K = phi (-delta)^{-(n+1)} + psi log(-delta)``, or plain
finite differences of any diagonal kernel.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import mpmath
import numpy as np
import sympy as sp

from .bergman import KernelSeries, compute_alpha
from .domains import DomainError, DomainSpec

EPS_AXIS = 1e-6
EPS_MARGIN = 1e-6
SERIES_BOUNDARY_MARGIN = 0.05

BERGMAN = "bergman"
BALL_NORMALIZED = "ball-normalized"


class GeometryError(DomainError):
    """Point outside the admissible region or a degenerate formula."""


class DegenerateEndpointError(GeometryError):
    """Boundary endpoint violates ``u_k != 0`` or ``d delta / d r_k (u) != 0``."""


class NormalizationMismatch(ValueError):
    pass


# --------------------------------------------------------------------------
# finite differences

_STENCILS = {
    0: ((0,), (1.0,)),
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
}


def _central(f, x, order, h):
    """Tensor central difference of ``f`` at ``x`` (second order in ``h``)."""
    offs, wts = [], []
    for a, hk in zip(order, h):
        o, w = _STENCILS[a]
        offs.append(np.asarray(o) * hk)
        wts.append(np.asarray(w) / hk ** a)
    pts, ws = [], []
    for combo in itertools.product(*[range(len(o)) for o in offs]):
        pts.append([x[k] + offs[k][i] for k, i in enumerate(combo)])
        ws.append(np.prod([wts[k][i] for k, i in enumerate(combo)]))
    vals = np.asarray(f(np.asarray(pts)))
    return float(np.dot(ws, vals))


def richardson_partial(f: Callable[[np.ndarray], np.ndarray], x: Sequence[float], order: Sequence[int],
                       h: float | Sequence[float], levels: int = 1) -> float:
    """Mixed partial ``d^order f(x)`` by central differences and Richardson extrapolation.

    ``f`` is evaluated on arrays of shape (m, d).  Each level halves the step
    and removes the next even power, so the error is ``O(h^(2 + 2 levels))``.
    """
    x = np.asarray(x, dtype=float)
    order = tuple(int(a) for a in order)
    if any(a > 3 or a < 0 for a in order):
        raise ValueError("orders up to 3 per axis")
    h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    table = [_central(f, x, order, h / 2 ** i) for i in range(levels + 1)]
    for m in range(1, levels + 1):
        table = [(4 ** m * fine - coarse) / (4 ** m - 1) for coarse, fine in zip(table[:-1], table[1:])]
    return table[0]


def _orders(n: int, total: int):
    for combo in itertools.combinations_with_replacement(range(n), total):
        order = [0] * n
        for k in combo:
            order[k] += 1
        yield combo, tuple(order)


def derivative_tensors(partial: Callable[[tuple[int, ...]], float], n: int):
    """Gradient, Hessian and third-derivative tensor from a partial-derivative oracle."""
    g = np.zeros(n)
    H = np.zeros((n, n))
    T = np.zeros((n, n, n))
    for combo, order in _orders(n, 1):
        g[combo] = partial(order)
    for combo, order in _orders(n, 2):
        v = partial(order)
        for perm in set(itertools.permutations(combo)):
            H[perm] = v
    for combo, order in _orders(n, 3):
        v = partial(order)
        for perm in set(itertools.permutations(combo)):
            T[perm] = v
    return g, H, T


def log_tensors_from_kernel(K0, Kg, KH, KT):
    """Derivatives of ``log K`` from those of ``K``."""
    g = Kg / K0
    H = KH / K0 - np.outer(g, g)
    T = (KT / K0
         - np.einsum("ij,k->ijk", H, g) - np.einsum("ik,j->ijk", H, g) - np.einsum("jk,i->ijk", H, g)
         - np.einsum("i,j,k->ijk", g, g, g))
    return g, H, T


# --------------------------------------------------------------------------
# kernel sources


@dataclass(frozen=True)
class LogDerivatives:
    """``L = log K(r)`` and its radial derivatives up to third order."""

    value: float
    grad: np.ndarray
    hess: np.ndarray
    third: np.ndarray


class KernelSource:
    """Diagonal kernel ``K(r) = K(z, z)`` with radial derivatives.

    Subclasses implement ``value`` (vectorized over (..., n)) and
    ``log_derivatives``; the axis derivatives ``d^j K / d r_k^j`` follow by
    Faa di Bruno unless overridden.
    """

    n: int
    domain: DomainSpec | None = None
    kind = "abstract"
    closed_form = False
    exponent: float | None = None

    def value(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_derivatives(self, r: np.ndarray) -> LogDerivatives:
        raise NotImplementedError

    def axis_derivatives(self, r: np.ndarray, k: int) -> np.ndarray:
        d = self.log_derivatives(r)
        K = math.exp(d.value)
        L1, L2, L3 = d.grad[k], d.hess[k, k], d.third[k, k, k]
        return np.array([K, K * L1, K * (L2 + L1 ** 2), K * (L3 + 3 * L1 * L2 + L1 ** 3)])

    def interior(self, r: np.ndarray) -> bool:
        if self.domain is None:
            return True
        return bool(self.domain.contains(np.asarray(r) * (1 + EPS_MARGIN)))


class BallKernel(KernelSource):
    """``(1 - |r|^2)^{-(n+1+lambda)}`` on the unit ball."""

    kind = "ball-closed-form"
    closed_form = True

    def __init__(self, n: int, lam: float = 0.0):
        from .domains import catalog_lookup
        self.n, self.lam = int(n), float(lam)
        self.exponent = self.n + 1 + self.lam
        self.domain = catalog_lookup("ball-lambda", self.n, {"lambda": self.lam})

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return (1.0 - np.sum(r * r, axis=-1)) ** (-self.exponent)

    def log_derivatives(self, r):
        r = np.asarray(r, dtype=float)
        m, rho = self.exponent, 1.0 - float(r @ r)
        eye = np.eye(self.n)
        g = 2 * m * r / rho
        H = 2 * m * eye / rho + 4 * m * np.outer(r, r) / rho ** 2
        T = (4 * m / rho ** 2 * (np.einsum("kl,j->jkl", eye, r) + np.einsum("jk,l->jkl", eye, r)
                                  + np.einsum("jl,k->jkl", eye, r))
             + 16 * m / rho ** 3 * np.einsum("j,k,l->jkl", r, r, r))
        return LogDerivatives(-m * math.log(rho), g, H, T)


class PolydiskKernel(KernelSource):
    """``prod_k (1 - r_k^2)^{-(2+lambda)}`` on the polydisk."""

    kind = "polydisk-closed-form"
    closed_form = True

    def __init__(self, n: int, lam: float = 0.0):
        from .domains import catalog_lookup
        self.n, self.lam = int(n), float(lam)
        self.exponent = 2 + self.lam
        self.domain = catalog_lookup("polydisk", self.n, {"lambda": self.lam})

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return np.prod((1.0 - r * r) ** (-self.exponent), axis=-1)

    def log_derivatives(self, r):
        r = np.asarray(r, dtype=float)
        m, rho = self.exponent, 1.0 - r * r
        T = np.zeros((self.n,) * 3)
        T[np.diag_indices(self.n, 3)] = 4 * m * r * (r * r + 3) / rho ** 3
        return LogDerivatives(-m * float(np.sum(np.log(rho))), 2 * m * r / rho,
                              np.diag(2 * m * (1 + r * r) / rho ** 2), T)


class SeriesKernel(KernelSource):
    """Truncated kernel series, differentiated term by term (exact for the truncation)."""

    kind = "series-termwise"

    def __init__(self, series: KernelSeries):
        self.series = series
        self.n = series.n
        self.domain = series.table.domain

    @classmethod
    def for_domain(cls, domain: DomainSpec, P: int | None = None) -> "SeriesKernel":
        from .bergman import default_truncation
        return cls(KernelSeries(compute_alpha(domain, P if P is not None else default_truncation(domain.n))))

    def value(self, r):
        r = np.asarray(r, dtype=float)
        lead = r.shape[:-1]
        return self.series.diagonal(r.reshape(-1, self.n)).reshape(lead)

    def log_derivatives(self, r):
        r = np.asarray(r, dtype=float)
        K0 = float(self.value(r))
        Kg, KH, KT = derivative_tensors(lambda order: self.series.radial_partials(r, order), self.n)
        g, H, T = log_tensors_from_kernel(K0, Kg, KH, KT)
        return LogDerivatives(math.log(K0), g, H, T)

    def axis_derivatives(self, r, k):
        r = np.asarray(r, dtype=float)
        out = []
        for j in range(4):
            order = [0] * self.n
            order[k] = j
            out.append(self.series.radial_partials(r, order))
        return np.array(out)


class FiniteDifferenceKernel(KernelSource):
    """Any diagonal kernel; derivatives of ``log K`` by Richardson central differences.

    The step on axis ``k`` is ``rel_step * min(r_k, boundary gap)``.
    """

    kind = "finite-difference"

    def __init__(self, value: Callable[[np.ndarray], np.ndarray], n: int, domain: DomainSpec | None = None,
                 rel_step: float = 1e-3):
        self._value = value
        self.n = int(n)
        self.domain = domain
        self.rel_step = rel_step

    @classmethod
    def wrap(cls, source: KernelSource, rel_step: float = 1e-3) -> "FiniteDifferenceKernel":
        fd = cls(source.value, source.n, source.domain, rel_step)
        fd.exponent = source.exponent
        return fd

    def value(self, r):
        return self._value(r)

    def _steps(self, r):
        scale = np.minimum(r, _boundary_gap(self.domain, r)) if self.domain is not None else r
        return self.rel_step * scale

    def log_derivatives(self, r):
        r = np.asarray(r, dtype=float)
        h = self._steps(r)

        def logf(x):
            return np.log(self._value(x))

        g, H, T = derivative_tensors(lambda order: richardson_partial(logf, r, order, h), self.n)
        return LogDerivatives(float(logf(r[None])[0]), g, H, T)


def _boundary_gap(domain: DomainSpec, r: np.ndarray) -> float:
    rho = float(np.linalg.norm(r))
    if rho == 0:
        return float(min(domain.bounding_box))
    return float(domain.extent((r / rho)[None])[0]) - rho


def default_source(domain: DomainSpec, P: int | None = None) -> KernelSource:
    """Closed form where the catalog has one, otherwise the truncated series."""
    if domain.name == "ball-lambda":
        return BallKernel(domain.n, domain.params.get("lambda", 0.0))
    if domain.name == "polydisk":
        return PolydiskKernel(domain.n, domain.params.get("lambda", 0.0))
    return SeriesKernel.for_domain(domain, P)


def check_point(source: KernelSource, r: Sequence[float]) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.shape != (source.n,):
        raise GeometryError(f"expected {source.n} radii, got shape {r.shape}")
    if np.any(r < EPS_AXIS):
        raise GeometryError(f"point {r} is within {EPS_AXIS} of a coordinate hyperplane")
    if not source.interior(r):
        raise GeometryError(f"point {r} fails the boundary margin test")
    return r


# --------------------------------------------------------------------------
# metric


@dataclass(frozen=True)
class MetricField:
    """``F_kl`` of a kernel source; ``derivative_mode`` picks the derivative route."""

    source: KernelSource
    derivative_mode: str = "series-termwise"

    def __post_init__(self):
        if self.derivative_mode not in ("series-termwise", "finite-difference"):
            raise GeometryError(f"unknown derivative mode {self.derivative_mode!r}")

    def _derivs(self, r):
        src = self.source
        if self.derivative_mode == "finite-difference" and not isinstance(src, FiniteDifferenceKernel):
            src = FiniteDifferenceKernel.wrap(src)
        return src.log_derivatives(r)

    def F(self, r) -> np.ndarray:
        r = check_point(self.source, r)
        return metric_from_log(self._derivs(r), r)

    def F_and_gradient(self, r) -> tuple[np.ndarray, np.ndarray]:
        """``F`` and ``dF[j, k, l] = d F_kl / d r_j`` (needs third derivatives)."""
        r = check_point(self.source, r)
        d = self._derivs(r)
        eye = np.eye(self.source.n)
        dF = 0.25 * (d.third
                     + np.einsum("kl,jk->jkl", eye, d.hess / r[None, :])
                     - np.einsum("kl,jk->jkl", eye, np.diag(d.grad / r ** 2)))
        return metric_from_log(d, r), dF


def metric_from_log(d: LogDerivatives, r: np.ndarray) -> np.ndarray:
    return 0.25 * (d.hess + np.diag(d.grad / r))


def metric_components(source: KernelSource, r: Sequence[float], mode: str = "series-termwise") -> np.ndarray:
    """Symmetric matrix ``F_kl(r)``."""
    return MetricField(source, mode).F(r)


def polar_frame_norms(F: np.ndarray, r: np.ndarray, scale: float = 1.0):
    """``||d/dtheta_k||^2`` and ``||d/dr_k||`` for the metric ``scale * h``."""
    d = np.diag(F) * scale
    return r ** 2 * d, np.sqrt(d)


def cartesian_hermitian_metric(source: KernelSource, r: Sequence[float], theta: Sequence[float],
                               rel_step: float = 1e-3) -> np.ndarray:
    """``g[k, l] = d^2 log K / dz_k d conj(z_l)`` by finite differences in real coordinates.

    The kernel is treated as a function of all ``2n`` real coordinates, so no
    rotational symmetry is assumed.
    """
    r = check_point(source, r)
    n = source.n
    theta = np.asarray(theta, dtype=float)
    z = r * np.exp(1j * theta)
    x0 = np.concatenate([z.real, z.imag])
    gap = _boundary_gap(source.domain, r) if source.domain is not None else float(np.min(r))
    h = rel_step * min(1.0, gap)

    def logf(x):
        zz = x[..., :n] + 1j * x[..., n:]
        return np.log(source.value(np.abs(zz)))

    Hr = np.zeros((2 * n, 2 * n))
    for a in range(2 * n):
        for b in range(a, 2 * n):
            order = [0] * (2 * n)
            order[a] += 1
            order[b] += 1
            Hr[a, b] = Hr[b, a] = richardson_partial(logf, x0, order, h)
    Lxx, Lyy, Lxy = Hr[:n, :n], Hr[n:, n:], Hr[:n, n:]
    return 0.25 * (Lxx + Lyy + 1j * (Lxy - Lxy.T))


def polar_real_metric(g: np.ndarray, r: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Real metric ``Re sum g_kl xi_k conj(eta_l)`` in the frame (d/dr_1.., d/dtheta_1..)."""
    n = len(r)
    frame = np.zeros((2 * n, n), dtype=complex)
    for k in range(n):
        frame[k, k] = np.exp(1j * theta[k])
        frame[n + k, k] = 1j * r[k] * np.exp(1j * theta[k])
    return np.real(frame @ g @ frame.conj().T)


def lagrangian_orthogonality_residual(source: KernelSource, r: Sequence[float],
                                      theta: Sequence[float] | None = None, normalized: bool = True,
                                      rel_step: float = 1e-3) -> float:
    """Largest cross term ``h(d/dtheta_k, d/dr_l)`` of the metric built in Cartesian coordinates.

    With ``normalized`` the cross term is divided by
    ``||d/dtheta_k|| ||d/dr_l||`` (a cosine, scale free); otherwise it is
    returned as is.
    """
    r = check_point(source, r)
    n = source.n
    theta = np.zeros(n) if theta is None else np.asarray(theta, dtype=float)
    h = polar_real_metric(cartesian_hermitian_metric(source, r, theta, rel_step), r, theta)
    cross = h[n:, :n]
    if not normalized:
        return float(np.abs(cross).max())
    d = np.sqrt(np.abs(np.diag(h)))
    return float(np.max(np.abs(cross) / np.outer(d[n:], d[:n])))


# --------------------------------------------------------------------------
# ball closed forms and hyperbolic helpers


def _ball_point(n: int, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.shape != (n,):
        raise GeometryError(f"expected {n} radii")
    if np.any(r < EPS_AXIS):
        raise GeometryError("point too close to a coordinate hyperplane")
    if float(r @ r) >= 1.0:
        raise GeometryError("point outside the open unit ball")
    return r


def complement_radius(r: np.ndarray, exclude: Sequence[int]) -> float:
    """``sqrt(1 - sum_{j not in exclude} r_j^2)``: radius of the slice disk."""
    mask = np.ones(len(r), bool)
    mask[list(exclude)] = False
    return math.sqrt(1.0 - float(np.sum(r[mask] ** 2)))


def geodesic_radius_k(r: Sequence[float], k: int) -> float:
    """Euclidean radius ``s_k = r_k / R_k`` of the orbit circle inside its complex geodesic disk."""
    r = np.asarray(r, dtype=float)
    return float(r[k]) / complement_radius(r, [k])


def geodesic_radius_kl(r: Sequence[float], k: int, l: int) -> float:
    r = np.asarray(r, dtype=float)
    return math.hypot(r[k], r[l]) / complement_radius(r, [k, l])


def circle_curvature(s: float | np.ndarray) -> float | np.ndarray:
    """Geodesic curvature of the circle of Euclidean radius ``s`` about 0 in the hyperbolic disk."""
    return (1 + s * s) / (2 * s)


def hyperbolic_radius(s: float | np.ndarray) -> float | np.ndarray:
    """``rho`` with ``cosh(rho/2)^2 = 1/(1 - s^2)``."""
    return 2 * np.arctanh(s)


def euclidean_radius(rho: float | np.ndarray) -> float | np.ndarray:
    return np.tanh(rho / 2)


def circle_curvature_hyperbolic(rho: float | np.ndarray) -> float | np.ndarray:
    return 1 / np.tanh(rho)


def ball_curvatures(n: int, r: Sequence[float], k: int, l: int | None = None) -> tuple[float, float | None]:
    """``(C_k, C_kl)`` for the ball metric normalized to curvature in [-1, -1/4].

    Indices are 0-based; ``C_kl`` is ``None`` when ``l`` is omitted.
    """
    r = _ball_point(n, r)
    Ck = float(circle_curvature(geodesic_radius_k(r, k)))
    if l is None:
        return Ck, None
    if l == k:
        raise GeometryError("C_kl needs k != l")
    return Ck, float(circle_curvature(geodesic_radius_kl(r, k, l)))


def ball_normalization_scale(n: int) -> float:
    """Factor taking the Bergman metric of the ball to the normalized one."""
    return 4.0 / (n + 1)


@dataclass(frozen=True)
class TaggedCurvature:
    """A curvature value together with the metric normalization it refers to."""

    value: float
    normalization: str
    n: int

    def to(self, normalization: str) -> "TaggedCurvature":
        if normalization == self.normalization:
            return self
        # curvature scales like metric^{-1/2}
        factor = math.sqrt(ball_normalization_scale(self.n))
        if (self.normalization, normalization) == (BALL_NORMALIZED, BERGMAN):
            return TaggedCurvature(self.value * factor, BERGMAN, self.n)
        if (self.normalization, normalization) == (BERGMAN, BALL_NORMALIZED):
            return TaggedCurvature(self.value / factor, BALL_NORMALIZED, self.n)
        raise NormalizationMismatch(f"no conversion from {self.normalization} to {normalization}")

    def difference(self, other: "TaggedCurvature") -> float:
        if other.normalization != self.normalization or other.n != self.n:
            raise NormalizationMismatch(
                f"cannot compare {self.normalization} with {other.normalization}; convert first")
        return self.value - other.value


# --------------------------------------------------------------------------
# second fundamental form


def orbit_acceleration(field: MetricField, r: Sequence[float], weights: Sequence[float]) -> np.ndarray:
    """Horizontal acceleration ``II(X, X)`` of ``X = sum_k c_k d/dtheta_k``, in the d/dr frame.

    With ``G(r) = ||X||^2 = sum c_k c_l r_k r_l F_kl`` the Christoffel
    symbols reduce to ``II(X, X) = -1/2 F^{-1} grad_r G``.
    """
    r = np.asarray(r, dtype=float)
    c = np.asarray(weights, dtype=float)
    F, dF = field.F_and_gradient(r)
    cr = c * r
    gradG = 2 * c * (F @ cr) + np.einsum("jkl,k,l->j", dF, cr, cr)
    return -0.5 * np.linalg.solve(F, gradG)


@dataclass(frozen=True)
class SecondFundamental:
    """Ball values of ``Q_k``, ``Q_kl`` (d/dr components) and collinearity residuals.

    ``residual_k`` measures the angle between the Christoffel-route ``Q_k``
    and its closed-form direction; ``residual_kl`` likewise for ``Q_kl``.
    """

    Q_k: np.ndarray
    Q_kl: np.ndarray | None
    Q_k_christoffel: np.ndarray
    Q_kl_christoffel: np.ndarray | None
    residual_k: float
    residual_kl: float | None
    direction_kl: np.ndarray | None


def _sine_residual(F, u, v) -> float:
    """``sin`` of the ``F``-angle between ``u`` and ``v``."""
    uu, vv = u @ F @ u, v @ F @ v
    if uu == 0 or vv == 0:
        return 0.0
    w = u - (u @ F @ v) / vv * v
    return math.sqrt(max(0.0, (w @ F @ w) / uu))


def ball_second_fundamental(n: int, r: Sequence[float], k: int, l: int | None = None) -> SecondFundamental:
    """``Q_k = -C_k ||d_theta_k||^2 ||N||^{-1} N`` with ``N = d/dr_k``; ``Q_kl`` with the pair radial field.

    Norms refer to the normalized ball metric.  The pair acceleration lies in
    the complex line through ``z`` spanned by ``z_k, z_l``, so its direction
    is ``N_kl = r_k d/dr_k + r_l d/dr_l``.  The Christoffel-route vectors and
    the collinearity residuals are returned alongside.
    """
    r = _ball_point(n, r)
    field = MetricField(BallKernel(n, 0.0))
    F = field.F(r) * ball_normalization_scale(n)
    Ck, Ckl = ball_curvatures(n, r, k, l)
    e_k = np.eye(n)[k]
    theta_sq = r[k] ** 2 * F[k, k]
    Qk = -Ck * theta_sq / math.sqrt(F[k, k]) * e_k
    Qk_c = orbit_acceleration(field, r, e_k)
    res_k = _sine_residual(F, Qk_c, e_k)
    if l is None:
        return SecondFundamental(Qk, None, Qk_c, None, res_k, None, None)
    c = np.zeros(n)
    c[[k, l]] = 1.0
    cr = c * r
    pair_sq = cr @ F @ cr
    N = cr
    Qkl = -Ckl * pair_sq / math.sqrt(N @ F @ N) * N
    Qkl_c = orbit_acceleration(field, r, c)
    return SecondFundamental(Qk, Qkl, Qk_c, Qkl_c, res_k, _sine_residual(F, Qkl_c, N), N)


def second_fundamental_polarization(field: MetricField, r: Sequence[float], k: int, l: int) -> np.ndarray:
    """``II(d_theta_k, d_theta_l) = 1/2 (Q_kl - Q_k - Q_l)``."""
    n = field.source.n
    e = np.eye(n)
    return 0.5 * (orbit_acceleration(field, r, e[k] + e[l]) - orbit_acceleration(field, r, e[k])
                  - orbit_acceleration(field, r, e[l]))


def second_fundamental_bilinear(field: MetricField, r: Sequence[float], k: int, l: int) -> np.ndarray:
    """``II(d_theta_k, d_theta_l) = -1/2 F^{-1} grad_r (r_k r_l F_kl)`` directly."""
    r = np.asarray(r, dtype=float)
    F, dF = field.F_and_gradient(r)
    n = len(r)
    e = np.eye(n)
    grad = (e[k] * r[l] + e[l] * r[k]) * F[k, l] + r[k] * r[l] * dF[:, k, l]
    return -0.5 * np.linalg.solve(F, grad)


# --------------------------------------------------------------------------
# kernel curvature


def chat_from_derivatives(K: float, K1: float, K2: float, K3: float, r: float) -> float:
    """Curvature of the ``k``-th orbit circle from ``d^j K / d r_k^j``, ``j <= 3``."""
    den = -K1 * K1 + K * K2 + K * K1 / r
    if not den > 0:
        raise GeometryError(f"degenerate curvature formula: 3/2-power argument {den} <= 0")
    num = (2 * K1 ** 3 - 3 * K * K1 * K2 + K * K * K3 - 3 * K * K1 ** 2 / r
           + 3 * K * K * K2 / r + K * K * K1 / r ** 2)
    return num / den ** 1.5


def chat_k(source: KernelSource, r: Sequence[float], k: int) -> float:
    """Bergman-metric geodesic curvature of the ``k``-th orbit circle (0-based ``k``)."""
    r = check_point(source, r)
    K, K1, K2, K3 = source.axis_derivatives(r, k)
    return chat_from_derivatives(K, K1, K2, K3, float(r[k]))


def chat_k_projection(field: MetricField, r: Sequence[float], k: int) -> float:
    """``-||d_theta_k||^{-2} ||d_r_k||^{-1} h(Q_k, d_r_k)`` with ``Q_k`` from the Christoffel route."""
    r = np.asarray(r, dtype=float)
    F = field.F(r)
    Q = orbit_acceleration(field, r, np.eye(len(r))[k])
    return float(-(Q @ F[:, k]) / (r[k] ** 2 * F[k, k] * math.sqrt(F[k, k])))


def chat_limit(source: KernelSource) -> float:
    """Boundary limit ``2 / sqrt(m)`` for kernels blowing up like ``(-delta)^{-m}``."""
    m = source.exponent if source.exponent is not None else source.n + 1
    return 2.0 / math.sqrt(m)


@dataclass(frozen=True)
class CurvatureReport:
    point: np.ndarray
    F: np.ndarray
    Chat_k: np.ndarray
    C_k: np.ndarray | None = None
    C_kl: np.ndarray | None = None
    Qk_direction_check: np.ndarray | None = None
    normalization: dict = field(default_factory=dict)

    def row(self) -> list:
        n = len(self.point)
        out = list(self.point) + [self.F[k, k] for k in range(n)]
        out += list(self.C_k) if self.C_k is not None else [float("nan")] * n
        out += list(self.Chat_k)
        return out + [f"C:{self.normalization.get('C_k', '')};Chat:{self.normalization.get('Chat_k', '')}"]

    @staticmethod
    def header(n: int) -> list[str]:
        return ([f"r_{k + 1}" for k in range(n)] + [f"F_{k + 1}{k + 1}" for k in range(n)]
                + [f"C_{k + 1}" for k in range(n)] + [f"Chat_{k + 1}" for k in range(n)] + ["normalization"])


def curvature_report(source: KernelSource, r: Sequence[float]) -> CurvatureReport:
    r = check_point(source, r)
    n = source.n
    F = metric_components(source, r)
    chat = np.array([chat_k(source, r, k) for k in range(n)])
    tags = {"Chat_k": BERGMAN}
    if isinstance(source, BallKernel) and source.lam == 0:
        Ck = np.array([ball_curvatures(n, r, k)[0] for k in range(n)])
        Ckl = np.full((n, n), np.nan)
        for k, l in itertools.permutations(range(n), 2):
            Ckl[k, l] = ball_curvatures(n, r, k, l)[1]
        resid = np.array([ball_second_fundamental(n, r, k).residual_k for k in range(n)])
        tags["C_k"] = BALL_NORMALIZED
        return CurvatureReport(r, F, chat, Ck, Ckl, resid, tags)
    return CurvatureReport(r, F, chat, normalization=tags)


# --------------------------------------------------------------------------
# boundary model and its radial derivatives


def radial_symbols(n: int) -> tuple[sp.Symbol, ...]:
    return sp.symbols(" ".join(f"r{k + 1}" for k in range(n)), positive=True, seq=True)


@dataclass(frozen=True)
class FeffermanExpansion:
    """``K = phi (-delta)^{-(n+1)} + psi log(-delta)`` with symbolic ``phi, psi, delta`` in r1..rn."""

    n: int
    delta: sp.Expr
    phi: sp.Expr
    psi: sp.Expr

    @classmethod
    def from_strings(cls, n: int, delta: str, phi: str, psi: str) -> "FeffermanExpansion":
        syms = radial_symbols(n)
        local = {str(s): s for s in syms}
        return cls(n, sp.sympify(delta, locals=local), sp.sympify(phi, locals=local),
                   sp.sympify(psi, locals=local))

    @property
    def symbols(self):
        return radial_symbols(self.n)

    @property
    def kernel(self) -> sp.Expr:
        return self.phi * (-self.delta) ** (-(self.n + 1)) + self.psi * sp.log(-self.delta)

    def delta_value(self, r) -> float:
        return float(_delta_fn(self)(*np.asarray(r, dtype=float)))

    def descriptor(self) -> dict:
        return {"n": self.n, "delta": str(self.delta), "phi": str(self.phi), "psi": str(self.psi)}


@dataclass(frozen=True)
class FeffermanCoefficients:
    """Table ``(j, l) -> (phi_jl, psi_jl)`` for derivatives along ``r_k``.

    ``d^j K / d r_k^j = sum_l phi_jl (-delta)^{-(n+1+l)} + sum_{l>=1} psi_jl delta^{-l}
    + psi_j0 log(-delta)``.
    """

    expansion: FeffermanExpansion
    k: int
    j_max: int
    phi: dict
    psi: dict
    literal: bool = False

    def derivative_expr(self, j: int) -> sp.Expr:
        exp = self.expansion
        d, n = exp.delta, exp.n
        out = sum(self.phi[j, l] * (-d) ** (-(n + 1 + l)) for l in range(j + 1))
        out += sum(self.psi[j, l] * d ** (-l) for l in range(1, j + 1))
        return out + self.psi[j, 0] * sp.log(-d)

    def partials(self, r: Sequence[float]) -> np.ndarray:
        """``[K, dK, ..., d^{j_max} K]`` along ``r_k`` at the point ``r``."""
        r = np.asarray(r, dtype=float)
        if not self.expansion.delta_value(r) < 0:
            raise GeometryError(f"delta(r) >= 0 at {r}: outside the model region")
        fns = _lambdified(self, "partials")
        return np.array([float(f(*r)) for f in fns])


def _lambdified(coeffs: FeffermanCoefficients, key: str):
    cache = coeffs.__dict__.setdefault("_cache", {})
    if key not in cache:
        syms = coeffs.expansion.symbols
        cache[key] = [sp.lambdify(syms, coeffs.derivative_expr(j), "math") for j in range(coeffs.j_max + 1)]
    return cache[key]


def fefferman_coefficients(exp: FeffermanExpansion, k: int, j_max: int = 3,
                           literal: bool = False) -> FeffermanCoefficients:
    """Coefficient recursion for radial derivatives of the boundary model along ``r_k`` (0-based).

    ``phi_jl = d phi_{j-1,l} + (n+l) phi_{j-1,l-1} delta'``.  For the
    logarithmic part, differentiating ``psi_{j-1,0} log(-delta)`` feeds
    ``psi_{j-1,0} delta'`` into ``psi_j1``, and ``psi_{j-1,l} delta^{-l}``
    feeds ``-l psi_{j-1,l} delta'`` into ``psi_{j,l+1}``.  ``literal=True``
    drops the logarithmic feed (``psi_j1 = d psi_{j-1,1}`` and
    ``psi_11 = 0``); it is kept only for comparison.
    """
    if not 0 <= j_max <= 3:
        raise GeometryError("j_max must be between 0 and 3")
    x = exp.symbols[k]
    dd = sp.diff(exp.delta, x)
    n = exp.n
    phi = {(0, 0): exp.phi}
    psi = {(0, 0): exp.psi}

    def get(tab, j, l):
        return tab.get((j, l), sp.Integer(0)) if j >= 0 and l >= 0 else sp.Integer(0)

    for j in range(1, j_max + 1):
        for l in range(j + 1):
            phi[j, l] = sp.diff(get(phi, j - 1, l), x) + (n + l) * get(phi, j - 1, l - 1) * dd
            if l == 1:
                feed = 0 if literal else 1
            else:
                feed = -(l - 1)
            psi[j, l] = sp.diff(get(psi, j - 1, l), x) + feed * get(psi, j - 1, l - 1) * dd
    return FeffermanCoefficients(exp, k, j_max, phi, psi, literal)


@functools.lru_cache(maxsize=64)
def _delta_fn(exp: FeffermanExpansion):
    return sp.lambdify(exp.symbols, exp.delta, "math")


@functools.lru_cache(maxsize=64)
def _compiled(exp: FeffermanExpansion, module: str, k: int = -1, j: int = 0):
    """Lambdified ``d^j K / d r_k^j`` (``k = -1``: the kernel itself)."""
    K = exp.kernel if k < 0 else sp.diff(exp.kernel, exp.symbols[k], j)
    return sp.lambdify(exp.symbols, K, module)


def fefferman_direct_partials(exp: FeffermanExpansion, k: int, r: Sequence[float], j_max: int = 3) -> np.ndarray:
    """Axis derivatives by symbolic differentiation of the whole kernel (reference route)."""
    r = np.asarray(r, dtype=float)
    return np.array([float(_compiled(exp, "math", k, j)(*r)) for j in range(j_max + 1)])


def fefferman_fd_partials(exp: FeffermanExpansion, k: int, r: Sequence[float], j_max: int = 3,
                          rel_step: float = 1e-4, levels: int = 2, dps: int = 40) -> np.ndarray:
    """Axis derivatives by Richardson central differences of the model kernel.

    The stencil is evaluated in ``dps``-digit arithmetic so the differences
    carry no floating-point cancellation; the step is ``rel_step`` times the
    smaller of ``-delta`` and ``r_k``.
    """
    r = np.asarray(r, dtype=float)
    f = _compiled(exp, "mpmath")
    h = rel_step * min(-exp.delta_value(r), float(r[k]))
    with mpmath.workdps(dps):
        x = [mpmath.mpf(float(v)) for v in r]

        def central(j, step):
            offs, wts = _STENCILS[j]
            total = mpmath.mpf(0)
            for o, w in zip(offs, wts):
                y = list(x)
                y[k] += o * step
                total += mpmath.mpf(w) * f(*y)
            return total / step ** j

        out = []
        for j in range(j_max + 1):
            table = [central(j, mpmath.mpf(h) / 2 ** i) for i in range(levels + 1)]
            for m in range(1, levels + 1):
                table = [(4 ** m * b - a) / (4 ** m - 1) for a, b in zip(table[:-1], table[1:])]
            out.append(float(table[0]))
    return np.array(out)


class FeffermanKernel(KernelSource):
    """Boundary model as a kernel source; axis derivatives come from the coefficient recursion."""

    kind = "fefferman-model"
    closed_form = True

    def __init__(self, exp: FeffermanExpansion, literal: bool = False):
        self.expansion = exp
        self.n = exp.n
        self.exponent = exp.n + 1
        self.literal = literal
        syms = exp.symbols
        L = sp.log(exp.kernel)
        self._K = sp.lambdify(syms, exp.kernel, "numpy")
        self._delta = sp.lambdify(syms, exp.delta, "numpy")
        d1 = [sp.diff(L, s) for s in syms]
        d2 = [[sp.diff(a, s) for s in syms] for a in d1]
        d3 = [[[sp.diff(b, s) for s in syms] for b in row] for row in d2]
        self._L = sp.lambdify(syms, [L, d1, d2, d3], "math")
        self._coeffs = {}

    def interior(self, r):
        return bool(self._delta(*np.asarray(r, dtype=float)) < -EPS_MARGIN)

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return self._K(*np.moveaxis(r, -1, 0))

    def log_derivatives(self, r):
        L, g, H, T = self._L(*np.asarray(r, dtype=float))
        return LogDerivatives(float(L), np.asarray(g, float), np.asarray(H, float), np.asarray(T, float))

    def axis_derivatives(self, r, k):
        if k not in self._coeffs:
            self._coeffs[k] = fefferman_coefficients(self.expansion, k, 3, self.literal)
        return self._coeffs[k].partials(r)

    def defining_gradient(self, r, k) -> float:
        g = sp.lambdify(self.expansion.symbols, sp.diff(self.expansion.delta, self.expansion.symbols[k]), "math")
        return float(g(*np.asarray(r, dtype=float)))


def manufactured_expansions() -> list[FeffermanExpansion]:
    """Model triples used by the recursion checks."""
    return [
        FeffermanExpansion.from_strings(2, "r1**2 + r2**2 - 1", "1 + r1**2", "r2"),
        FeffermanExpansion.from_strings(1, "r1**2 - 1", "2 + r1 + r1**3", "r1**3 - r1"),
        FeffermanExpansion.from_strings(3, "r1**4 + r2**2 + r3**2 - 1", "1 + r1*r2 + r3**2", "r1**2 - r3"),
    ]


# --------------------------------------------------------------------------
# boundary scan


@dataclass(frozen=True)
class AsymptoticScan:
    axis: int
    endpoint: np.ndarray
    distances: np.ndarray
    values: np.ndarray
    limit: float

    @property
    def deviations(self) -> np.ndarray:
        return np.abs(self.values - self.limit)

    @property
    def final_deviation(self) -> float:
        return float(self.deviations[-1])

    def monotone_tail(self, count: int = 5) -> bool:
        tail = self.deviations[-count:]
        return bool(np.all(np.diff(tail) < 0))

    def rows(self) -> tuple[list[str], list[list]]:
        return ["distance", "Chat", "deviation"], [[float(d), float(v), float(abs(v - self.limit))]
                                                   for d, v in zip(self.distances, self.values)]


def _defining_partial(source: KernelSource, domain: DomainSpec | None, u: np.ndarray, k: int) -> tuple[float, float]:
    if isinstance(source, FeffermanKernel):
        g = np.array([source.defining_gradient(u, j) for j in range(source.n)])
    else:
        g = np.asarray(domain.defining_gradient(u), dtype=float)
    return float(g[k]), float(np.linalg.norm(g))


def boundary_asymptotics_scan(spec: DomainSpec | None, k: int, direction: Sequence[float],
                              distances: Sequence[float] | None = None,
                              source: KernelSource | None = None) -> AsymptoticScan:
    """Sample ``Chat_k`` along the ray from the origin to the boundary point in ``direction``.

    ``distances`` are Euclidean distances to the endpoint ``u``; by default
    13 geometric samples from 1e-1 to 1e-4.  Endpoints with ``u_k = 0`` or
    ``d delta / d r_k (u) = 0`` are rejected; series kernels are refused
    within relative distance 0.05 of the boundary.
    """
    if source is None:
        if spec is None:
            raise GeometryError("need a domain or a kernel source")
        if spec.name != "ball-lambda":
            raise GeometryError(f"{spec.name} has no closed-form kernel; pass an explicit source")
        source = BallKernel(spec.n, spec.params.get("lambda", 0.0))
    n = source.n
    omega = np.asarray(direction, dtype=float)
    if omega.shape != (n,) or np.any(omega < 0) or not np.any(omega > 0):
        raise GeometryError("direction must be a nonzero vector in the closed positive orthant")
    omega = omega / np.linalg.norm(omega)
    if isinstance(source, FeffermanKernel):
        f = sp.lambdify([sp.Symbol("t")], source.expansion.delta.subs(
            dict(zip(source.expansion.symbols, sp.Symbol("t") * sp.Matrix(omega)))), "math")
        from scipy.optimize import brentq
        hi = 1.0
        while f(hi) < 0:
            hi *= 2
        t_end = brentq(f, 0.0, hi, xtol=1e-15)
        domain = None
    else:
        domain = spec or source.domain
        t_end = float(domain.extent(omega[None])[0])
    u = t_end * omega
    if abs(u[k]) <= 1e-12 * t_end:
        raise DegenerateEndpointError(f"endpoint {u} has vanishing coordinate {k + 1}")
    gk, gnorm = _defining_partial(source, domain, u, k)
    if abs(gk) <= 1e-12 * max(gnorm, 1.0):
        raise DegenerateEndpointError(f"defining function has vanishing r_{k + 1} derivative at {u}")
    if distances is None:
        distances = np.logspace(-1, -4, 13)
    distances = np.asarray(distances, dtype=float)
    if isinstance(source, SeriesKernel) and np.min(distances) < SERIES_BOUNDARY_MARGIN * t_end:
        raise GeometryError("series kernels are not accurate within 0.05 of the boundary; use a closed form")
    vals = []
    for d in distances:
        r = u * (1 - d / t_end)
        if np.any((r < EPS_AXIS) & (omega > 0)):
            raise GeometryError("ray sample too close to a coordinate hyperplane")
        K, K1, K2, K3 = source.axis_derivatives(r, k)
        vals.append(chat_from_derivatives(K, K1, K2, K3, float(r[k])))
    return AsymptoticScan(k, u, distances, np.array(vals), chat_limit(source))
