"""Property suite run by ``rtoep verify``.

Each check compares two independent routes (or a route against a closed
form) and records the observed discrepancy next to its threshold.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import geometry as geo
from .bergman import CoefficientVector, apply_R, apply_Rstar, compute_alpha
from .domains import DomainSpec, annulus_symbol, constant_symbol, iter_interior_samples, lincomb_symbol, power_symbol, re_z_symbol
from .toeplitz import commutator_norm, compute_gamma, compute_gamma_ball, matrix_oracle

DEFAULT_TOLERANCES = {
    "normalization": 1e-9,
    "closed_form": 1e-8,
    "diagonal": 1e-7,
    "commutator": 1e-7,
    "negative_control": 1e-3,
    "routes": 1e-8,
    "metric": 1e-6,
    "curvature": 1e-6,
    "recursion": 1e-5,
    "isometry": 1e-7,
}


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    observed: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: observed {self.observed:.3e} (threshold {self.threshold:.1e}) {self.detail}".rstrip()

    def as_dict(self) -> dict:
        return asdict(self)


def _below(name, observed, threshold, detail=""):
    observed = float(observed)
    return CheckResult(name, bool(observed < threshold), observed, threshold, detail)


def radial_test_symbols(n: int):
    return [
        power_symbol([2.0] * n),
        annulus_symbol(0.0, 0.5),
        lincomb_symbol([(0.5, power_symbol([2.0] + [0.0] * (n - 1))), (2.0, annulus_symbol(0.3, 0.7))]),
    ]


def run_suite(domain: DomainSpec, P: int = 4, tolerances: dict | None = None, samples: int = 20,
              seed: int = 0) -> list[CheckResult]:
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    rng = np.random.default_rng(seed)
    n = domain.n
    out: list[CheckResult] = []

    table = compute_alpha(domain, P)
    g1 = compute_gamma(domain, constant_symbol(1.0), P, table)
    out.append(_below("normalization gamma_1 = 1", np.abs(g1.values - 1).max(), tol["normalization"]))
    dev = table.closed_form_deviation()
    if dev is not None:
        out.append(_below("alpha quadrature vs closed form", dev, tol["closed_form"]))

    mats = []
    for a in radial_test_symbols(n):
        M = matrix_oracle(domain, a, P, table)
        g = compute_gamma(domain, a, P, table)
        desc = a.descriptor["type"]
        out.append(_below(f"diagonality off-diagonal ({desc})", M.off_diagonal_max(), tol["diagonal"]))
        out.append(_below(f"diagonal vs gamma ({desc})", np.abs(np.diag(M.entries) - g.values).max(),
                          tol["diagonal"]))
        mats.append(M)
        if domain.name == "ball-lambda":
            gb = compute_gamma_ball(n, domain.params.get("lambda", 0.0), a, P)
            out.append(_below(f"gamma base vs simplex route ({desc})",
                              np.abs(g.values / gb.values - 1).max(), tol["routes"]))
    comm = max(commutator_norm(mats[i], mats[j]) for i in range(3) for j in range(i + 1, 3))
    out.append(_below("commutator of radial oracle matrices", comm, tol["commutator"]))
    neg = commutator_norm(matrix_oracle(domain, re_z_symbol(1), P, table), mats[0])
    out.append(CheckResult("negative control commutator (Re z_1)", bool(neg > tol["negative_control"]),
                           neg, tol["negative_control"], "must exceed"))

    iso = 0.0
    for _ in range(3):
        c = rng.normal(size=len(table)) + 1j * rng.normal(size=len(table))
        back = apply_R(table, lambda z, c=c: apply_Rstar(table, c, z)).to_array(table)
        iso = max(iso, float(np.abs(back - c).max()))
    unit = max(float(np.abs(apply_R(table, lambda z, p=p: apply_Rstar(table, CoefficientVector.unit(p), z))
                            .to_array(table) - np.eye(len(table))[i]).max())
               for i, p in enumerate(table.indices))
    out.append(_below("R R* = I", iso, tol["isometry"]))
    out.append(_below("R e_q = unit vector", unit, tol["isometry"]))

    source = geo.default_source(domain)
    worst, pd_ok = 0.0, True
    pts = list(iter_interior_samples(domain, samples, rng, margin=0.05, floor=0.05))
    for r in pts:
        theta = rng.uniform(0, 2 * math.pi, n)
        worst = max(worst, geo.lagrangian_orthogonality_residual(source, r, theta))
        F = geo.metric_components(source, r)
        pd_ok &= bool(np.allclose(F, F.T) and np.all(np.linalg.eigvalsh(F) > 0))
    out.append(_below("Lagrangian cross-term residual", worst, tol["metric"]))
    out.append(CheckResult("metric symmetric positive definite", pd_ok, float(not pd_ok), 0.5))

    if domain.name == "ball-lambda":
        ball = geo.BallKernel(n, 0.0)
        chain, minimum = 0.0, math.inf
        for r in pts:
            for k in range(n):
                Ck, _ = geo.ball_curvatures(n, r, k)
                chain = max(chain, abs(geo.chat_k(ball, r, k) - 2 / math.sqrt(n + 1) * Ck))
                minimum = min(minimum, Ck, *(geo.ball_curvatures(n, r, k, l)[1] for l in range(n) if l != k))
        out.append(_below("curvature chain Chat = 2/sqrt(n+1) C", chain, tol["curvature"]))
        out.append(CheckResult("ball curvatures exceed 1", bool(minimum > 1), minimum, 1.0, "must exceed"))

    rec = 0.0
    for exp in geo.manufactured_expansions():
        coeffs = [geo.fefferman_coefficients(exp, k) for k in range(exp.n)]
        for _ in range(3):
            r = _model_point(exp, rng)
            for k in range(exp.n):
                fd = geo.fefferman_fd_partials(exp, k, r)
                rec = max(rec, float(np.max(np.abs(coeffs[k].partials(r) / fd - 1))))
    out.append(_below("boundary-model recursion vs finite differences", rec, tol["recursion"]))
    return out


def _model_point(exp, rng, min_depth: float = 0.1, floor: float = 0.05) -> np.ndarray:
    """Random point with ``-delta >= min_depth`` and all coordinates above ``floor``."""
    while True:
        r = rng.uniform(floor, 1.0, exp.n)
        if -exp.delta_value(r) >= min_depth:
            return r
