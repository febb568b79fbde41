"""Adaptive integration over Reinhardt bases, full domains and simplices.

Bases of complete Reinhardt domains are star-shaped with respect to the
origin, so every base is parametrized by a box: hyperspherical angles
``u`` in ``[0, pi/2]^{n-1}`` for the direction ``omega(u)`` and a fraction
``t`` in ``[0, 1]`` of the radial segment ``[lower(omega), upper(omega)]``.
The curved boundary is absorbed into ``upper = extent(omega)``, so no cell
ever straddles it.  Radial jumps of an integrand (``breaks``) become shell
boundaries the same way.

Each box cell carries a tensor 15-point Gauss-Legendre rule.  Per-axis errors
are estimated against the interpolatory 14-point rule on the same nodes with
the midpoint dropped; the worst cells are bisected along their worst axis
until every component meets ``max(rel_tol*|I|, abs_tol)``.

Integrands may be vector valued: they map an ``(N, n)`` array of points to
``(N,)`` or ``(N, m)`` values, and all ``m`` components are refined together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import roots_jacobi

from .domains import DomainSpec

GL_ORDER = 15
_x, _w = np.polynomial.legendre.leggauss(GL_ORDER)
GL_NODES = 0.5 * (_x + 1.0)
GL_WEIGHTS = 0.5 * _w


def _embedded_weights() -> np.ndarray:
    keep = [i for i in range(GL_ORDER) if i != GL_ORDER // 2]
    V = np.polynomial.legendre.legvander(_x[keep], len(keep) - 1).T
    moments = np.zeros(len(keep))
    moments[0] = 2.0
    w = np.zeros(GL_ORDER)
    w[keep] = np.linalg.solve(V, moments)
    return 0.5 * w


EMB_WEIGHTS = _embedded_weights()
_EPS = np.finfo(float).eps
_CHUNK = 2_000_000
MIN_CELL_WIDTH = 1e-9


class QuadratureError(RuntimeError):
    """Raised when an integrand is not finite at an evaluation node."""


@dataclass
class QuadratureResult:
    value: np.ndarray | float | complex
    error_estimate: np.ndarray | float
    cells_used: int
    converged: bool

    def __float__(self):
        return float(np.real(self.value))


@dataclass
class QuadratureRequest:
    """Bundled integration request; ``run()`` dispatches on ``mode``."""

    integrand: Callable[[np.ndarray], np.ndarray]
    region: DomainSpec
    mode: str = "base"
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_subdivisions: int = 4000
    breaks: Sequence[float] = ()
    n_theta: int | None = None
    square: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("budget must be at least one cell")
        if self.mode not in ("base", "full-polar"):
            raise ValueError(f"unknown quadrature mode {self.mode!r}")

    def run(self) -> QuadratureResult:
        kw = dict(rel_tol=self.rel_tol, abs_tol=self.abs_tol,
                  max_cells=self.max_subdivisions, breaks=self.breaks)
        if self.mode == "base":
            return integrate_base(self.integrand, self.region, square=self.square, **kw)
        return integrate_full_polar(self.integrand, self.region, n_theta=self.n_theta, **kw)


# --------------------------------------------------------------------------
# tensor rules on boxes


def tensor_nodes(d: int, nodes: np.ndarray = GL_NODES) -> np.ndarray:
    grids = np.meshgrid(*([nodes] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def _tensor_weights(per_axis: Sequence[np.ndarray]) -> np.ndarray:
    grids = np.meshgrid(*per_axis, indexing="ij")
    return np.prod(np.stack([g.ravel() for g in grids], axis=-1), axis=1)


def box_rule(f: Callable[[np.ndarray], np.ndarray], lo: Sequence[float], hi: Sequence[float],
             order: int = GL_ORDER) -> np.ndarray:
    """Tensor Gauss-Legendre rule of ``order`` points per axis on one box."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    x, w = np.polynomial.legendre.leggauss(order)
    x, w = 0.5 * (x + 1), 0.5 * w
    pts = lo + (hi - lo) * tensor_nodes(lo.size, x)
    vals = np.asarray(f(pts))
    return np.tensordot(_tensor_weights([w] * lo.size), vals, axes=(0, 0)) * np.prod(hi - lo)


def orthant_directions(u: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Hyperspherical directions in the positive orthant and their surface Jacobian."""
    lead = u.shape[:-1]
    omega = np.empty(lead + (n,))
    jac = np.ones(lead)
    s = np.ones(lead)
    for j in range(n - 1):
        omega[..., j] = s * np.cos(u[..., j])
        sj = np.sin(u[..., j])
        if n - 2 - j:
            jac = jac * sj ** (n - 2 - j)
        s = s * sj
    omega[..., n - 1] = s
    return omega, jac


# --------------------------------------------------------------------------
# adaptive engine over star-shaped regions


Radius = Callable[[np.ndarray], np.ndarray]


class _StarIntegrator:
    """Adaptive cubature over ``{rho*omega : lower(omega) <= rho < upper(omega)}`` shells."""

    def __init__(self, func, n: int, shells: Sequence[tuple[Radius, Radius]],
                 rel_tol: float, abs_tol, max_cells: int, grade: int = 1):
        self.func = func
        self.grade = grade
        self.n = n
        self.d = n  # n-1 angles plus the radial fraction
        self.shells = list(shells)
        self.rel_tol = rel_tol
        self.abs_tol = abs_tol
        self.max_cells = max_cells
        self.pts = tensor_nodes(self.d)
        # column 0: full rule; column k+1: embedded rule on axis k
        cols = [_tensor_weights([GL_WEIGHTS] * self.d)]
        for k in range(self.d):
            cols.append(_tensor_weights([EMB_WEIGHTS if j == k else GL_WEIGHTS
                                         for j in range(self.d)]))
        self.weight_matrix = np.stack(cols, axis=1)

    def _map(self, lo, hi, shell_ids):
        C = lo.shape[0]
        param = lo[:, None, :] + (hi - lo)[:, None, :] * self.pts[None]
        u, t = param[..., :-1], param[..., -1]
        if self.n > 1:
            omega, jac = orthant_directions(u, self.n)
        else:
            omega = np.ones(t.shape + (1,))
            jac = np.ones(t.shape)
        rho_lo = np.empty(t.shape)
        rho_hi = np.empty(t.shape)
        for s in np.unique(shell_ids):
            sel = shell_ids == s
            lower, upper = self.shells[s]
            rho_lo[sel] = lower(omega[sel])
            rho_hi[sel] = upper(omega[sel])
        width = np.maximum(rho_hi - rho_lo, 0.0)
        rho = rho_lo + t * width
        if self.grade > 1:
            # cluster the outermost shell's nodes at the boundary; measuring from
            # the upper end keeps the gap exact
            outer = (shell_ids == len(self.shells) - 1)[:, None]
            g = self.grade
            rho = np.where(outer, rho_hi - width * (1 - t) ** g, rho)
            jac = jac * np.where(outer, g * (1 - t) ** (g - 1), 1.0)
        r = rho[..., None] * omega
        jac = jac * width * rho ** (self.n - 1) * np.prod(hi - lo, axis=1)[:, None]
        return r.reshape(C * self.pts.shape[0], self.n), jac

    def _evaluate(self, lo, hi, shell_ids):
        C = lo.shape[0]
        if C == 0:
            return None
        M = self.pts.shape[0]
        # probe the number of components on the first node
        r, jac = self._map(lo, hi, shell_ids)
        vals = np.asarray(self.func(r))
        if vals.ndim == 1:
            vals = vals[:, None]
        if not np.all(np.isfinite(vals)):
            raise QuadratureError("integrand is not finite at an evaluation node")
        m = vals.shape[1]
        vals = vals.reshape(C, M, m) * jac[..., None]
        vt = np.swapaxes(vals, 1, 2)  # (C, m, M)
        S = vt @ self.weight_matrix  # (C, m, d+1)
        Q = S[..., 0]
        Qabs = np.abs(vt) @ self.weight_matrix[:, 0]
        E = np.abs(S[..., 1:] - Q[..., None]).transpose(0, 2, 1)
        return Q, Qabs, E

    def _evaluate_chunked(self, lo, hi, shell_ids, m_hint):
        M = self.pts.shape[0]
        per = max(1, _CHUNK // (M * max(m_hint, 1)))
        parts = [self._evaluate(lo[i:i + per], hi[i:i + per], shell_ids[i:i + per])
                 for i in range(0, lo.shape[0], per)]
        return tuple(np.concatenate(x, axis=0) for x in zip(*parts))

    def _initial_cells(self):
        d = self.d
        lo = [[0.0] * d for _ in self.shells]
        hi = [[math.pi / 2] * (d - 1) + [1.0] for _ in self.shells]
        return np.asarray(lo), np.asarray(hi), np.arange(len(self.shells))

    def run(self):
        lo, hi, sid = self._initial_cells()
        first = self._evaluate(lo[:1], hi[:1], sid[:1])
        m = first[0].shape[1]
        Q, Qabs, E = self._evaluate_chunked(lo, hi, sid, m)
        converged = False
        while True:
            total = Q.sum(axis=0)
            cell_err = E.sum(axis=1)
            tot_err = cell_err.sum(axis=0)
            floor = 64 * _EPS * Qabs.sum(axis=0)
            tol = np.maximum(np.maximum(self.rel_tol * np.abs(total), self.abs_tol), floor)
            tol = np.where(tol > 0, tol, np.finfo(float).tiny)
            if np.all(tot_err <= tol):
                converged = True
                break
            C = lo.shape[0]
            if C >= self.max_cells:
                break
            score = (cell_err / tol).max(axis=1)
            # cells this thin would put nodes within rounding of a singular face
            score[np.min(hi - lo, axis=1) < MIN_CELL_WIDTH] = 0.0
            if not score.max() > 0:
                break
            cut = max(0.25 * score.max(), (tot_err / tol).max() / (4 * C))
            chosen = np.flatnonzero((score >= cut) & (score > 0))
            if chosen.size == 0:
                break
            chosen = chosen[np.argsort(-score[chosen])][: max(1, self.max_cells - C)]
            axis = (E[chosen] / tol).max(axis=2).argmax(axis=1)
            mid = 0.5 * (lo[chosen, axis] + hi[chosen, axis])
            lo_a, hi_a = lo[chosen].copy(), hi[chosen].copy()
            lo_b, hi_b = lo[chosen].copy(), hi[chosen].copy()
            idx = np.arange(len(chosen))
            hi_a[idx, axis] = mid
            lo_b[idx, axis] = mid
            new_lo = np.concatenate([lo_a, lo_b])
            new_hi = np.concatenate([hi_a, hi_b])
            new_sid = np.concatenate([sid[chosen], sid[chosen]])
            nQ, nQabs, nE = self._evaluate_chunked(new_lo, new_hi, new_sid, m)
            keep = np.ones(C, dtype=bool)
            keep[chosen] = False
            lo = np.concatenate([lo[keep], new_lo])
            hi = np.concatenate([hi[keep], new_hi])
            sid = np.concatenate([sid[keep], new_sid])
            Q = np.concatenate([Q[keep], nQ])
            Qabs = np.concatenate([Qabs[keep], nQabs])
            E = np.concatenate([E[keep], nE])
        # canonical accumulation order keeps results reproducible
        order = np.lexsort(np.concatenate([lo, hi, sid[:, None]], axis=1).T[::-1])
        total = np.zeros(Q.shape[1], dtype=Q.dtype)
        for i in order:
            total = total + Q[i]
        return total, E.sum(axis=1).sum(axis=0), lo.shape[0], converged


class _BoxIntegrator(_StarIntegrator):
    """The same adaptive engine on the box ``prod [0, b_k]``, graded towards each upper face."""

    def __init__(self, func, box: Sequence[float], rel_tol: float, abs_tol, max_cells: int, grade: int = 1):
        super().__init__(func, len(box), [(None, None)], rel_tol, abs_tol, max_cells, grade)
        self.box = np.asarray(box, dtype=float)

    def _initial_cells(self):
        return np.zeros((1, self.d)), np.ones((1, self.d)), np.zeros(1, dtype=int)

    def _map(self, lo, hi, shell_ids):
        C = lo.shape[0]
        x = lo[:, None, :] + (hi - lo)[:, None, :] * self.pts[None]
        g = self.grade
        if g > 1:
            r = self.box * (1 - (1 - x) ** g)
            jac = np.prod(self.box * g * (1 - x) ** (g - 1), axis=-1)
        else:
            r = self.box * x
            jac = np.full(x.shape[:-1], float(np.prod(self.box)))
        jac = jac * np.prod(hi - lo, axis=1)[:, None]
        return r.reshape(C * self.pts.shape[0], self.n), jac


def _shells(extent: Radius, breaks: Sequence[Radius]) -> list[tuple[Radius, Radius]]:
    """Radial shells between consecutive breaks, clipped to the extent."""
    bounds: list[Radius] = [lambda om: np.zeros(om.shape[:-1])]
    for b in breaks:
        bounds.append(lambda om, b=b: np.minimum(b(om), extent(om)))
    bounds.append(extent)
    return list(zip(bounds[:-1], bounds[1:]))


def _finish(total, err, cells, converged, squeeze):
    if squeeze:
        return QuadratureResult(total[0], float(err[0]), cells, converged)
    return QuadratureResult(total, err, cells, converged)


def _probe_scalar(func, n):
    v = np.asarray(func(np.full((1, n), 1e-3)))
    return v.ndim == 1


def integrate_star(func, n: int, extent: Radius, breaks: Sequence[Radius] = (),
                   rel_tol: float = 1e-10, abs_tol=1e-14, max_cells: int = 4000,
                   grade: int = 1) -> QuadratureResult:
    """Lebesgue integral of ``func`` over a star-shaped region of R_+^n.

    ``grade > 1`` maps the radial fraction of the outermost shell through
    ``t = 1 - (1 - u)^grade``, which smooths ``(1 - t)^lambda`` boundary weights.
    """
    squeeze = _probe_scalar(func, n)
    eng = _StarIntegrator(func, n, _shells(extent, breaks), rel_tol, abs_tol, max_cells, grade)
    return _finish(*eng.run(), squeeze)


def integrate_base(integrand, domain: DomainSpec, rel_tol: float = 1e-10, abs_tol=1e-14,
                   max_cells: int = 4000, breaks: Sequence[float] = (),
                   square: bool = False) -> QuadratureResult:
    """``int_{tau(D)} f(r) prod_k r_k dr_k``; the factor ``prod r_k`` is applied here.

    ``breaks`` are Euclidean radii ``|r|`` across which ``f`` may jump.  With
    ``square=True`` the integral is computed in the variables ``s_k = r_k^2``
    (``r_k dr_k = ds_k / 2``), which turns monomial moments into polynomials.
    Box-shaped bases without breaks are integrated on the box directly.
    """
    n = domain.n
    if square:
        def func(s):
            return np.asarray(integrand(np.sqrt(s))) * 0.5 ** n
        extent = lambda om: domain.extent(om, squared=True)  # noqa: E731
        radii = [lambda om, c=c: c * c / np.sum(om, axis=-1) for c in sorted(breaks)]
    else:
        def func(r):
            vals = np.asarray(integrand(r))
            w = np.prod(r, axis=-1)
            return vals * (w if vals.ndim == 1 else w[:, None])
        extent = domain.extent
        radii = [lambda om, c=c: np.full(om.shape[:-1], c) for c in sorted(breaks)]
    grade = boundary_grade(domain)
    if domain.box_base and not radii:
        box = np.asarray(domain.bounding_box, dtype=float) ** (2 if square else 1)
        squeeze = _probe_scalar(func, n)
        return _finish(*_BoxIntegrator(func, box, rel_tol, abs_tol, max_cells, grade).run(), squeeze)
    return integrate_star(func, n, extent, radii, rel_tol, abs_tol, max_cells, grade)


def boundary_grade(domain: DomainSpec) -> int:
    """Radial grading for the weight's boundary exponent: none when it is an integer."""
    lam = float(domain.params.get("lambda", 0.0))
    return 1 if lam == round(lam) else 2


def theta_grid(n: int, n_theta: int) -> tuple[np.ndarray, float]:
    """Equispaced torus nodes and the common trapezoid weight."""
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    grid = tensor_nodes(n, th)
    return grid, (2 * np.pi / n_theta) ** n


def integrate_full_polar(integrand, domain: DomainSpec, n_theta: int | None = None,
                         rel_tol: float = 1e-8, abs_tol=1e-14, max_cells: int = 4000,
                         breaks: Sequence[float] = ()) -> QuadratureResult:
    """``int_D g(z) dv(z)`` with ``g`` evaluated on complex points ``(N, n)``.

    The torus factor uses the trapezoid rule with ``n_theta`` nodes per angle,
    exact for trigonometric polynomials of degree below ``n_theta``; the radial
    factor uses the adaptive base engine.
    """
    n = domain.n
    n_theta = int(n_theta or 33)
    grid, wt = theta_grid(n, n_theta)
    phase = np.exp(1j * grid)  # (T, n)
    T = phase.shape[0]

    def radial(r):
        probe = np.asarray(integrand(r[:1, None, :] * phase[None]))
        m = 1 if probe.ndim == 2 else probe.shape[-1]
        per = max(1, _CHUNK // (T * m))
        pieces = []
        for i in range(0, r.shape[0], per):
            z = r[i:i + per, None, :] * phase[None]
            g = np.asarray(integrand(z))
            pieces.append(g.sum(axis=1) * wt)
        return np.concatenate(pieces, axis=0)

    return integrate_base(radial, domain, rel_tol=rel_tol, abs_tol=abs_tol,
                          max_cells=max_cells, breaks=breaks)


# --------------------------------------------------------------------------
# simplex


def _jacobi01(N: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for ``int_0^1 g(x) (1-x)^alpha dx``."""
    if alpha == 0:
        x, w = np.polynomial.legendre.leggauss(N)
        return 0.5 * (x + 1), 0.5 * w
    x, w = roots_jacobi(N, alpha, 0.0)
    return 0.5 * (x + 1), w * 0.5 ** (alpha + 1)


def _simplex_rule(n: int, lam: float, N: int, breaks: Sequence[float]):
    """Nodes and weights on the standard simplex for the weight ``(1 - sum r)^lam``.

    Collapsed coordinates: ``r = sigma * v`` with ``sigma = sum r`` and ``v`` on
    the face simplex through a Duffy map; the weight and the Jacobians become
    Jacobi weights in each cube variable.
    """
    cuts = [0.0] + [b for b in sorted(breaks) if 0 < b < 1] + [1.0]
    sig, wsig = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b == 1.0:
            x, w = _jacobi01(N, lam)
            s = a + (b - a) * x
            sig.append(s)
            wsig.append(w * (b - a) * (1 - a) ** lam * s ** (n - 1))
        else:
            x, w = _jacobi01(N, 0.0)
            s = a + (b - a) * x
            sig.append(s)
            wsig.append(w * (b - a) * (1 - s) ** lam * s ** (n - 1))
    sig, wsig = np.concatenate(sig), np.concatenate(wsig)
    if n == 1:
        return sig[:, None], wsig
    # face simplex of dimension n-1 via Duffy: v_j = w_j prod_{i<j} (1-w_i)
    dirs = []
    for j in range(n - 1):
        x, w = _jacobi01(N, float(n - 2 - j))
        dirs.append((x, w))
    grids = np.meshgrid(*[d[0] for d in dirs], indexing="ij")
    wgrids = np.meshgrid(*[d[1] for d in dirs], indexing="ij")
    W = np.stack([g.ravel() for g in grids], axis=-1)
    WW = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=1)
    pts = sig[:, None, None] * _face_points(n, W)[None]
    wts = wsig[:, None] * WW[None]
    return pts.reshape(-1, n), wts.ravel()


def _face_points(n: int, W: np.ndarray) -> np.ndarray:
    """Duffy map from the cube to the face simplex: ``v_j = w_j prod_{i<j} (1 - w_i)``."""
    V = np.empty((W.shape[0], n))
    rest = np.ones(W.shape[0])
    for j in range(n - 1):
        V[:, j] = rest * W[:, j]
        rest = rest * (1 - W[:, j])
    V[:, n - 1] = rest
    return V


def _simplex_root_rule(n: int, lam: float, N: int, breaks: Sequence[float]):
    """Simplex rule in root coordinates, for integrands smooth in ``sqrt(r_k)``.

    ``sum r = rho^2`` and Duffy variables ``w_j = sin(phi_j)^2`` make every
    ``sqrt(r_k)`` a product of ``rho``, sines and cosines, so tensor Gauss
    rules converge spectrally for functions like ``a(sqrt r)``.
    """
    cuts = [0.0] + [math.sqrt(b) for b in sorted(breaks) if 0 < b < 1] + [1.0]
    rho, wrho = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b == 1.0:
            x, w = _jacobi01(N, lam)
            t = a + (b - a) * x
            w = w * (b - a) * (1 - a) ** lam * (1 + t) ** lam
        else:
            x, w = _jacobi01(N, 0.0)
            t = a + (b - a) * x
            w = w * (b - a) * (1 - t * t) ** lam
        rho.append(t)
        wrho.append(w * 2 * t ** (2 * n - 1))
    sig, wsig = np.concatenate(rho) ** 2, np.concatenate(wrho)
    if n == 1:
        return sig[:, None], wsig
    x, w = _jacobi01(N, 0.0)
    phi, wphi = 0.5 * math.pi * x, 0.5 * math.pi * w
    sin, cos = np.sin(phi), np.cos(phi)
    axes = [(sin ** 2, wphi * 2 * sin * cos * cos ** (2 * (n - 2 - j))) for j in range(n - 1)]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    W = np.stack([g.ravel() for g in grids], axis=-1)
    WW = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=1)
    pts = sig[:, None, None] * _face_points(n, W)[None]
    return pts.reshape(-1, n), (wsig[:, None] * WW[None]).ravel()


def integrate_simplex(f, n: int, lam: float = 0.0, rel_tol: float = 1e-10, abs_tol=1e-14,
                      breaks: Sequence[float] = (), max_order: int = 160,
                      root_coordinates: bool = False) -> QuadratureResult:
    """``int_Delta f(r) (1 - sum r)^lam dr`` over the standard simplex.

    ``breaks`` are values of ``sum r`` where ``f`` may jump.  Accuracy is
    raised by doubling the per-axis order until two successive estimates agree.
    ``root_coordinates`` selects a rule suited to integrands that are smooth in
    ``sqrt(r_k)`` rather than in ``r_k``.
    """
    if not lam > -1:
        raise ValueError("lambda must exceed -1")
    rule = _simplex_root_rule if root_coordinates else _simplex_rule
    prev = None
    N = 8
    err = np.inf
    while N <= max_order:
        pts, wts = rule(n, lam, N, breaks)
        vals = np.asarray(f(pts))
        if not np.all(np.isfinite(vals)):
            raise QuadratureError("integrand is not finite at a simplex node")
        cur = np.tensordot(wts, vals, axes=(0, 0))
        if prev is not None:
            err = np.abs(cur - prev)
            tol = np.maximum(rel_tol * np.abs(cur), abs_tol)
            if np.all(err <= tol):
                return QuadratureResult(cur, err if np.ndim(err) else float(err), N, True)
        prev = cur
        N *= 2
    return QuadratureResult(prev, err if np.ndim(err) else float(err), N // 2, False)
