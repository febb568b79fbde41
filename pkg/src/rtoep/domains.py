"""Complete Reinhardt domains described by their base and a radial weight.

A domain in C^n is stored through its base, the region of the positive
orthant swept by ``(|z_1|, ..., |z_n|)``, together with a weight ``mu(r)``.
All callables are vectorized: they receive arrays whose last axis has
length ``n`` and return arrays of the leading shape.

Logarithmic convexity of a base is assumed, never checked.  Catalog entries
satisfy it; user-supplied bases are taken as-is.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np
from scipy.special import gammaln

ArrayFn = Callable[[np.ndarray], np.ndarray]
MultiIndex = tuple[int, ...]

CATALOG = ("ball-lambda", "polydisk", "superellipsoid")


class DomainError(ValueError):
    """Raised for invalid domain or symbol descriptions."""


# --------------------------------------------------------------------------
# multi-indices and points


def multi_index(entries: Sequence[int], n: int | None = None) -> MultiIndex:
    p = tuple(int(v) for v in entries)
    if len(p) == 0:
        raise DomainError("multi-index must have at least one entry")
    if any(v < 0 for v in p):
        raise DomainError(f"multi-index entries must be non-negative: {p}")
    if n is not None and len(p) != n:
        raise DomainError(f"multi-index {p} does not have {n} entries")
    return p


def multi_indices(n: int, order: int) -> list[MultiIndex]:
    """All p in Z_+^n with |p| <= order, sorted by |p| then lexicographically."""
    if n < 1 or order < 0:
        raise DomainError("need n >= 1 and order >= 0")
    out = [p for p in itertools.product(range(order + 1), repeat=n) if sum(p) <= order]
    out.sort(key=lambda p: (sum(p), p))
    return out


def shell(n: int, order: int) -> list[MultiIndex]:
    """Multi-indices with |p| == order."""
    return [p for p in multi_indices(n, order) if sum(p) == order]


def log_factorial(p: Sequence[int]) -> float:
    return float(sum(gammaln(np.asarray(p, dtype=float) + 1.0)))


@dataclass(frozen=True)
class PolarPoint:
    r: tuple[float, ...]
    theta: tuple[float, ...]

    def __post_init__(self):
        if len(self.r) != len(self.theta):
            raise DomainError("r and theta must have the same length")
        if any(v < 0 for v in self.r):
            raise DomainError("radii must be non-negative")
        object.__setattr__(self, "theta", tuple(float(t) % (2 * math.pi) for t in self.theta))

    @property
    def z(self) -> np.ndarray:
        return np.asarray(self.r) * np.exp(1j * np.asarray(self.theta))

    @classmethod
    def from_z(cls, z: Sequence[complex]) -> "PolarPoint":
        z = np.asarray(z, dtype=complex)
        return cls(tuple(np.abs(z)), tuple(np.angle(z) % (2 * math.pi)))


# --------------------------------------------------------------------------
# weights and symbols


@dataclass(frozen=True)
class Weight:
    """Positive radial weight ``mu(r)`` with optional known total mass."""

    evaluate: ArrayFn
    total_mass: float | None = None
    description: str = ""

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.evaluate(np.asarray(r, dtype=float))


@dataclass(frozen=True)
class SymbolSpec:
    """A symbol ``a`` for Toeplitz operators.

    ``radial`` is used for separately radial symbols and must depend on the
    radii only.  ``full`` takes complex points; for radial symbols it is
    derived from ``radial``.  ``breaks`` lists Euclidean radii ``|r|`` across
    which the symbol may jump; quadrature splits its radial panels there.
    """

    kind: str
    radial: ArrayFn | None = None
    full: Callable[[np.ndarray], np.ndarray] | None = None
    bound: float = math.inf
    breaks: tuple[float, ...] = ()
    descriptor: Mapping | None = None

    def __post_init__(self):
        if self.kind not in ("separately-radial", "general"):
            raise DomainError(f"unknown symbol kind {self.kind!r}")
        if self.kind == "separately-radial" and self.radial is None:
            raise DomainError("separately radial symbol needs a radial evaluator")
        if self.kind == "general" and self.full is None:
            raise DomainError("general symbol needs a full evaluator")

    @property
    def is_radial(self) -> bool:
        return self.kind == "separately-radial"

    def __call__(self, r: np.ndarray) -> np.ndarray:
        if not self.is_radial:
            raise DomainError("general symbols must be evaluated on complex points")
        return self.radial(np.asarray(r, dtype=float))

    def evaluate_full(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.is_radial:
            return self.radial(np.abs(z))
        return self.full(z)


def constant_symbol(value: float = 1.0) -> SymbolSpec:
    value = float(value)
    return SymbolSpec(
        "separately-radial",
        radial=lambda r: np.full(np.shape(r)[:-1], value),
        bound=abs(value),
        descriptor={"type": "constant", "value": value},
    )


def power_symbol(exponents: Sequence[float]) -> SymbolSpec:
    """``a(r) = prod_k r_k ** exponents[k]``."""
    m = np.asarray(exponents, dtype=float)
    if np.any(m < 0):
        raise DomainError("power symbol exponents must be non-negative")

    def radial(r):
        if r.shape[-1] != m.size:
            raise DomainError(f"power symbol has {m.size} exponents, point has {r.shape[-1]}")
        return np.prod(r ** m, axis=-1)

    return SymbolSpec(
        "separately-radial", radial=radial, bound=1.0,
        descriptor={"type": "power", "exponents": [float(v) for v in m]},
    )


def annulus_symbol(inner: float, outer: float) -> SymbolSpec:
    """Indicator of ``inner <= |r| < outer`` (Euclidean norm of the radii)."""
    inner, outer = float(inner), float(outer)
    if not 0 <= inner < outer:
        raise DomainError("annulus needs 0 <= inner < outer")

    def radial(r):
        rho = np.sqrt(np.sum(r * r, axis=-1))
        return ((rho >= inner) & (rho < outer)).astype(float)

    breaks = tuple(b for b in (inner, outer) if b > 0 and math.isfinite(b))
    return SymbolSpec(
        "separately-radial", radial=radial, bound=1.0, breaks=breaks,
        descriptor={"type": "annulus", "inner": inner, "outer": outer},
    )


def lincomb_symbol(terms: Sequence[tuple[float, SymbolSpec]]) -> SymbolSpec:
    terms = [(float(c), s) for c, s in terms]
    if not terms:
        raise DomainError("lincomb needs at least one term")
    radial_kind = all(s.is_radial for _, s in terms)
    breaks = tuple(sorted({b for _, s in terms for b in s.breaks}))
    bound = sum(abs(c) * s.bound for c, s in terms)
    desc = {"type": "lincomb",
            "terms": [{"coef": c, "symbol": dict(s.descriptor or {})} for c, s in terms]}
    if radial_kind:
        return SymbolSpec(
            "separately-radial",
            radial=lambda r: sum(c * s.radial(r) for c, s in terms),
            bound=bound, breaks=breaks, descriptor=desc,
        )
    return SymbolSpec(
        "general",
        full=lambda z: sum(c * s.evaluate_full(z) for c, s in terms),
        bound=bound, breaks=breaks, descriptor=desc,
    )


def re_z_symbol(axis: int = 1) -> SymbolSpec:
    """``Re z_axis`` (1-based axis); not separately radial."""
    k = int(axis) - 1
    if k < 0:
        raise DomainError("axis is 1-based")
    return SymbolSpec(
        "general", full=lambda z: np.real(z[..., k]), bound=1.0,
        descriptor={"type": "angular-re-z", "axis": k + 1},
    )


def symbol_from_descriptor(desc: Mapping) -> SymbolSpec:
    """Build a symbol from its JSON mini-language description."""
    if not isinstance(desc, Mapping) or "type" not in desc:
        raise DomainError(f"symbol descriptor needs a 'type': {desc!r}")
    kind = desc["type"]
    allowed = {
        "constant": {"type", "value"},
        "power": {"type", "exponents"},
        "annulus": {"type", "inner", "outer"},
        "lincomb": {"type", "terms"},
        "angular-re-z": {"type", "axis"},
    }
    if kind not in allowed:
        raise DomainError(f"unknown symbol type {kind!r}")
    extra = set(desc) - allowed[kind]
    if extra:
        raise DomainError(f"unknown fields in {kind} symbol: {sorted(extra)}")
    try:
        if kind == "constant":
            return constant_symbol(desc.get("value", 1.0))
        if kind == "power":
            return power_symbol(desc["exponents"])
        if kind == "annulus":
            return annulus_symbol(desc.get("inner", 0.0), desc["outer"])
        if kind == "lincomb":
            return lincomb_symbol(
                [(t["coef"], symbol_from_descriptor(t["symbol"])) for t in desc["terms"]])
        return re_z_symbol(desc.get("axis", 1))
    except KeyError as exc:
        raise DomainError(f"{kind} symbol is missing field {exc}") from None


# --------------------------------------------------------------------------
# domains


def _bisect_extent(member: ArrayFn, omega: np.ndarray, upper: float, steps: int = 64) -> np.ndarray:
    """Largest rho with rho*omega in the base, by vectorized bisection."""
    lo = np.zeros(omega.shape[:-1])
    hi = np.full(omega.shape[:-1], upper)
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        inside = member(mid[..., None] * omega)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return hi


@dataclass(frozen=True)
class DomainSpec:
    """A bounded complete Reinhardt domain centred at the origin.

    ``membership`` decides strict interior membership of base points (boundary
    points are outside).  ``extent(omega)`` returns the boundary distance along
    unit directions ``omega`` of the positive orthant; catalog entries supply it
    in closed form, other domains fall back to bisection on ``membership``.
    ``square_extent`` plays the same role for the image of the base under
    ``s_k = r_k**2``.  ``box_base`` marks bases equal to their bounding box.
    """

    name: str
    n: int
    membership: ArrayFn
    bounding_box: tuple[float, ...]
    weight: Weight
    params: Mapping = field(default_factory=dict)
    defining_function: ArrayFn | None = None
    defining_gradient: ArrayFn | None = None
    radial_extent: ArrayFn | None = None
    square_extent: ArrayFn | None = None
    log_moment: Callable[[MultiIndex], float] | None = None
    box_base: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("dimension must be positive")
        if len(self.bounding_box) != self.n:
            raise DomainError("bounding box must have one bound per axis")

    def contains(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return np.asarray(self.membership(r), dtype=bool) & np.all(r >= 0, axis=-1)

    def extent(self, omega: np.ndarray, squared: bool = False) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        if squared:
            if self.square_extent is not None:
                return self.square_extent(omega)
            upper = float(np.sqrt(np.sum(np.square(self.bounding_box) ** 2))) * 1.01
            return _bisect_extent(lambda s: self.contains(np.sqrt(np.maximum(s, 0))), omega, upper)
        if self.radial_extent is not None:
            return self.radial_extent(omega)
        upper = float(np.linalg.norm(self.bounding_box)) * 1.01
        return _bisect_extent(self.contains, omega, upper)

    def descriptor(self) -> dict:
        return {"name": self.name, "n": self.n, "params": dict(self.params)}

    def moment_closed_form(self, p: MultiIndex) -> float | None:
        """``int_tau r^{2p} mu(r) prod r_k dr_k`` when the catalog knows it."""
        if self.log_moment is None:
            return None
        return math.exp(self.log_moment(p))


def _ball(n: int, lam: float) -> DomainSpec:
    log_c = gammaln(n + lam + 1) - n * math.log(math.pi) - gammaln(lam + 1)
    c = math.exp(log_c)

    def weight(r):
        rho = np.maximum(1.0 - np.sum(r * r, axis=-1), 0.0)
        return c * rho ** lam if lam != 0 else np.full(rho.shape, c)

    def log_moment(p):
        p = multi_index(p, n)
        return (log_factorial(p) + gammaln(n + lam + 1) - gammaln(n + sum(p) + lam + 1)
                - n * math.log(2 * math.pi))

    return DomainSpec(
        name="ball-lambda", n=n, params={"lambda": lam},
        membership=lambda r: np.sum(r * r, axis=-1) < 1.0,
        bounding_box=(1.0,) * n,
        weight=Weight(weight, total_mass=1.0, description=f"c_lambda (1-|z|^2)^{lam}"),
        defining_function=lambda r: np.sum(r * r, axis=-1) - 1.0,
        defining_gradient=lambda r: 2.0 * np.asarray(r, dtype=float),
        radial_extent=lambda om: np.ones(om.shape[:-1]),
        square_extent=lambda om: 1.0 / np.sum(om, axis=-1),
        log_moment=log_moment,
    )


def _polydisk(n: int, lam: float) -> DomainSpec:
    c = (lam + 1.0) / math.pi

    def weight(r):
        rho = np.maximum(1.0 - r * r, 0.0)
        return np.prod(c * rho ** lam, axis=-1)

    def log_moment(p):
        p = multi_index(p, n)
        return sum(gammaln(k + 1) + gammaln(lam + 2) - gammaln(k + lam + 2)
                   - math.log(2 * math.pi) for k in p)

    return DomainSpec(
        name="polydisk", n=n, params={"lambda": lam},
        membership=lambda r: np.all(r < 1.0, axis=-1),
        bounding_box=(1.0,) * n,
        weight=Weight(weight, total_mass=1.0, description=f"prod (lambda+1)/pi (1-|z_k|^2)^{lam}"),
        radial_extent=lambda om: 1.0 / np.max(om, axis=-1),
        square_extent=lambda om: 1.0 / np.max(om, axis=-1),
        log_moment=log_moment,
        box_base=True,
    )


def _superellipsoid(n: int, q: float, lam: float) -> DomainSpec:
    # u_k = r_k^{2q} turns every moment into a Dirichlet integral
    def raw_log_moment(p):
        a = (np.asarray(p, dtype=float) + 1.0) / q
        return (float(np.sum(gammaln(a))) + gammaln(lam + 1) - gammaln(a.sum() + lam + 1)
                - n * math.log(2 * q))

    log_c = -(raw_log_moment((0,) * n) + n * math.log(2 * math.pi))
    c = math.exp(log_c)

    def level(r):
        return np.sum(np.asarray(r, dtype=float) ** (2 * q), axis=-1)

    def weight(r):
        rho = np.maximum(1.0 - level(r), 0.0)
        return c * rho ** lam if lam != 0 else np.full(rho.shape, c)

    return DomainSpec(
        name="superellipsoid", n=n, params={"q": q, "lambda": lam},
        membership=lambda r: level(r) < 1.0,
        bounding_box=(1.0,) * n,
        weight=Weight(weight, total_mass=1.0, description=f"c (1-sum r^{2 * q})^{lam}"),
        defining_function=lambda r: level(r) - 1.0,
        defining_gradient=lambda r: 2 * q * np.asarray(r, dtype=float) ** (2 * q - 1),
        radial_extent=lambda om: np.sum(om ** (2 * q), axis=-1) ** (-1.0 / (2 * q)),
        square_extent=lambda om: np.sum(om ** q, axis=-1) ** (-1.0 / q),
        log_moment=lambda p: raw_log_moment(multi_index(p, n)) + log_c,
    )


def catalog_lookup(name: str, n: int, params: Mapping | None = None) -> DomainSpec:
    """Build a catalog domain.

    ``ball-lambda`` takes ``lambda`` (> -1), ``polydisk`` an optional per-factor
    ``lambda``, ``superellipsoid`` the exponent ``q`` (>= 1) and ``lambda``.
    Every catalog weight is normalized so that ``mu dv`` is a probability
    measure.
    """
    params = dict(params or {})
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 1:
        raise DomainError(f"dimension must be a positive integer, got {n!r}")
    n = int(n)
    allowed = {"ball-lambda": {"lambda"}, "polydisk": {"lambda"},
               "superellipsoid": {"q", "lambda"}}
    if name not in allowed:
        raise DomainError(f"unknown catalog domain {name!r}; known: {', '.join(CATALOG)}")
    extra = set(params) - allowed[name]
    if extra:
        raise DomainError(f"unknown parameters for {name}: {sorted(extra)}")
    lam = float(params.get("lambda", 0.0))
    if not lam > -1:
        raise DomainError(f"lambda must exceed -1 (weight not integrable), got {lam}")
    if name == "ball-lambda":
        return _ball(n, lam)
    if name == "polydisk":
        return _polydisk(n, lam)
    q = float(params.get("q", 2.0))
    if q < 1:
        raise DomainError("superellipsoid exponent q must be >= 1")
    return _superellipsoid(n, q, lam)


def domain_from_descriptor(desc: Mapping) -> DomainSpec:
    if not isinstance(desc, Mapping):
        raise DomainError("domain descriptor must be an object")
    extra = set(desc) - {"name", "n", "params"}
    if extra:
        raise DomainError(f"unknown fields in domain descriptor: {sorted(extra)}")
    try:
        return catalog_lookup(desc["name"], desc["n"], desc.get("params"))
    except KeyError as exc:
        raise DomainError(f"domain descriptor is missing {exc}") from None


def base_membership_grid(spec: DomainSpec, resolution: int | Sequence[int]) -> np.ndarray:
    """Boolean lattice over the bounding box; a cell is inside iff its centre is."""
    if np.isscalar(resolution):
        resolution = (int(resolution),) * spec.n
    if len(resolution) != spec.n or min(resolution) < 2:
        raise DomainError("resolution must be >= 2 on every axis")
    axes = [(np.arange(m) + 0.5) / m * b for m, b in zip(resolution, spec.bounding_box)]
    centres = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return spec.contains(centres)


def grid_centres(spec: DomainSpec, resolution: int) -> list[np.ndarray]:
    return [(np.arange(resolution) + 0.5) / resolution * b for b in spec.bounding_box]


def iter_interior_samples(spec: DomainSpec, count: int, rng: np.random.Generator,
                          margin: float = 0.0, floor: float = 0.0) -> Iterator[np.ndarray]:
    """Rejection-sample base points, optionally shrunk towards the origin.

    ``margin`` keeps samples inside ``(1 - margin)`` times the boundary along
    their ray; ``floor`` keeps every coordinate at least that large.
    """
    box = np.asarray(spec.bounding_box)
    produced = 0
    while produced < count:
        r = rng.uniform(0, 1, size=(4 * count, spec.n)) * box
        r = r[spec.contains(r) & np.all(r >= floor, axis=1)]
        if margin > 0 and len(r):
            rho = np.linalg.norm(r, axis=1)
            ext = spec.extent(r / rho[:, None])
            r = r[rho < (1 - margin) * ext]
        for point in r[: count - produced]:
            produced += 1
            yield point
