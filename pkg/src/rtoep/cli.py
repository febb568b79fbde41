"""Batch front end: ``rtoep <command> --spec run.json [--out path] [--format csv|json]``.

Exit status: 0 success, 1 a ``verify`` check failed, 2 the run spec could not
be parsed or validated, 3 quadrature did not converge.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import geometry as geo
from .bergman import KernelSeries, ball_kernel, compute_alpha, default_truncation, kernel_eval, table_rows
from .domains import DomainError, domain_from_descriptor, symbol_from_descriptor
from .toeplitz import (commutator_norm, compute_gamma, compute_gamma_ball, diagonal_matrix, matrix_oracle,
                       spectral_report)
from .verify import DEFAULT_TOLERANCES, run_suite

EXIT_OK, EXIT_VERIFY, EXIT_PARSE, EXIT_NONCONVERGED = 0, 1, 2, 3

COMMON = {"command", "out", "format", "P", "rel_tol"}

SCHEMAS: dict[str, dict[str, Any]] = {
    "alpha": {"required": {"domain"}, "optional": {"method"},
              "doc": "normalization constants alpha_p for |p| <= P"},
    "gamma": {"required": {"domain", "symbol"}, "optional": {"route"},
              "doc": "eigenvalue sequence gamma_a(p); route 'base' (any domain) or 'simplex' (ball)"},
    "spectrum": {"required": {"domain", "symbol"}, "optional": {"gap", "compact_threshold"},
                 "doc": "norm, spectrum sample, essential-spectrum estimate and compactness verdict"},
    "oracle": {"required": {"domain", "symbol"}, "optional": {"n_theta"},
               "doc": "matrix <a e_p, e_q> by full-domain quadrature"},
    "commutator": {"required": {"domain", "symbols"}, "optional": {"method", "n_theta"},
                   "doc": "Frobenius norm of [T_a, T_b]; method 'oracle' or 'gamma'"},
    "kernel": {"required": {"domain", "pairs"}, "optional": set(),
               "doc": "truncated kernel K_P(z, zeta); pairs of {z, zeta} given as [[re, im], ...]"},
    "metric": {"required": {"domain", "points"}, "optional": {"mode"},
               "doc": "metric components F_kl at base points r; mode 'series-termwise' or 'finite-difference'"},
    "curvature": {"required": {"domain", "points"}, "optional": set(),
                  "doc": "curvature field: F_kk, C_k (ball), Chat_k at base points r"},
    "asymptotics": {"required": {"domain", "axis", "direction"}, "optional": {"distances"},
                    "doc": "Chat_k along the ray towards the boundary point in 'direction'; axis is 1-based"},
    "verify": {"required": {"domain"}, "optional": {"tolerances", "samples", "seed"},
               "doc": "property suite; 'tolerances' overrides any of: " + ", ".join(sorted(DEFAULT_TOLERANCES))},
}


class SpecError(ValueError):
    pass


class NotConverged(RuntimeError):
    pass


@dataclass
class RunSpec:
    command: str
    fields: dict
    out: str | None = None
    format: str = "csv"
    raw: dict = field(default_factory=dict)

    @property
    def P(self) -> int:
        return int(self.fields.get("P", default_truncation(self.domain.n)))

    @property
    def rel_tol(self) -> float | None:
        v = self.fields.get("rel_tol")
        return None if v is None else float(v)

    @property
    def domain(self):
        return domain_from_descriptor(self.fields["domain"])


def parse_spec(command: str, data: Any, out: str | None = None, fmt: str | None = None) -> RunSpec:
    """Validate a run spec; unknown or missing fields are errors."""
    if command not in SCHEMAS:
        raise SpecError(f"unknown command {command!r}; known: {', '.join(SCHEMAS)}")
    if not isinstance(data, dict):
        raise SpecError("run spec must be a JSON object")
    if data.get("command", command) != command:
        raise SpecError(f"spec is for {data['command']!r}, not {command!r}")
    schema = SCHEMAS[command]
    allowed = schema["required"] | schema["optional"] | COMMON
    unknown = set(data) - allowed
    if unknown:
        raise SpecError(f"unknown fields for {command}: {sorted(unknown)}")
    missing = schema["required"] - set(data)
    if missing:
        raise SpecError(f"missing fields for {command}: {sorted(missing)}")
    fmt = fmt or data.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise SpecError(f"format must be csv or json, got {fmt!r}")
    if "P" in data and (not isinstance(data["P"], int) or isinstance(data["P"], bool) or data["P"] < 0):
        raise SpecError("P must be a non-negative integer")
    spec = RunSpec(command, {k: v for k, v in data.items() if k not in ("command", "out", "format")},
                   out or data.get("out"), fmt, dict(data))
    try:
        spec.domain
        for key in ("symbol",):
            if key in spec.fields:
                symbol_from_descriptor(spec.fields[key])
        if "symbols" in spec.fields:
            if not isinstance(spec.fields["symbols"], list) or len(spec.fields["symbols"]) != 2:
                raise SpecError("'symbols' must list exactly two symbol descriptors")
            for s in spec.fields["symbols"]:
                symbol_from_descriptor(s)
    except DomainError as exc:
        raise SpecError(str(exc)) from None
    return spec


def thread_count() -> int:
    raw = os.environ.get("RTOEP_THREADS")
    if raw is None:
        return max(1, min(8, os.cpu_count() or 1))
    try:
        return max(1, int(raw))
    except ValueError:
        raise SpecError(f"RTOEP_THREADS must be an integer, got {raw!r}") from None


def _pmap(fn, items):
    items = list(items)
    workers = thread_count()
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.16e}"
    return str(v)


def header_block(spec: RunSpec) -> dict:
    dom = spec.domain
    return {
        "spec": {"command": spec.command, **spec.fields},
        "domain": dom.descriptor(),
        "weight": dom.weight.description,
        "truncation": spec.fields.get("P", default_truncation(dom.n)),
        "tolerance": spec.fields.get("rel_tol", "default"),
    }


def render(spec: RunSpec, header: list[str], rows: list[list], extra: dict | None = None) -> str:
    head = header_block(spec)
    if extra:
        head.update(extra)
    if spec.format == "json":
        body = [dict(zip(header, [_jsonable(v) for v in row])) for row in rows]
        return json.dumps({"header": head, "columns": header, "rows": body}, indent=2) + "\n"
    buf = io.StringIO()
    for key, value in head.items():
        buf.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def read_header(text: str) -> RunSpec:
    """Reconstruct the run spec from an emitted file (CSV or JSON)."""
    if text.lstrip().startswith("{"):
        data = json.loads(text)["header"]["spec"]
        fmt = "json"
    else:
        data = None
        for line in text.splitlines():
            if line.startswith("# spec: "):
                data = json.loads(line[len("# spec: "):])
                break
        if data is None:
            raise SpecError("no spec line in header")
        fmt = "csv"
    data = dict(data)
    command = data.pop("command")
    return parse_spec(command, data, fmt=fmt)


# --------------------------------------------------------------------------
# commands


def _tol(spec, default):
    return spec.rel_tol if spec.rel_tol is not None else default


def _check(results):
    failed = [r for r in results if hasattr(r, "failed_indices") and r.failed_indices]
    if failed:
        raise NotConverged(f"quadrature did not converge for indices {failed[0].failed_indices[:5]}")


def cmd_alpha(spec):
    t = compute_alpha(spec.domain, spec.P, method=spec.fields.get("method", "quadrature"),
                      rel_tol=_tol(spec, 1e-12))
    _check([t])
    header, rows = table_rows(t)
    return header, rows, {"closed_form_deviation": t.closed_form_deviation()}


def _gamma(spec):
    dom = spec.domain
    a = symbol_from_descriptor(spec.fields["symbol"])
    if spec.fields.get("route", "base") == "simplex":
        if dom.name != "ball-lambda":
            raise SpecError("the simplex route is available on ball-lambda only")
        g = compute_gamma_ball(dom.n, dom.params.get("lambda", 0.0), a, spec.P, rel_tol=_tol(spec, 1e-12))
    elif spec.fields.get("route", "base") == "base":
        g = compute_gamma(dom, a, spec.P, rel_tol=_tol(spec, 1e-12))
    else:
        raise SpecError("route must be 'base' or 'simplex'")
    _check([g])
    return g


def cmd_gamma(spec):
    header, rows = _gamma(spec).rows()
    return header, rows, None


def cmd_spectrum(spec):
    rep = spectral_report(_gamma(spec), gap=float(spec.fields.get("gap", 1e-3)),
                          compact_threshold=float(spec.fields.get("compact_threshold", 1e-4)))
    js = rep.as_json()
    rows = [[k, json.dumps(v)] for k, v in js.items()]
    return ["quantity", "value"], rows, {"report": js}


def _matrix_rows(M):
    rows = []
    for i, q in enumerate(M.indices):
        for j, p in enumerate(M.indices):
            v = M.entries[i, j]
            rows.append([str(list(q)), str(list(p)), v.real, v.imag])
    return ["q", "p", "re", "im"], rows


def cmd_oracle(spec):
    a = symbol_from_descriptor(spec.fields["symbol"])
    M = matrix_oracle(spec.domain, a, spec.P, n_theta=spec.fields.get("n_theta"), rel_tol=_tol(spec, 1e-10))
    header, rows = _matrix_rows(M)
    return header, rows, {"off_diagonal_max": M.off_diagonal_max()}


def cmd_commutator(spec):
    dom = spec.domain
    syms = [symbol_from_descriptor(s) for s in spec.fields["symbols"]]
    method = spec.fields.get("method", "oracle")
    if method == "oracle":
        table = compute_alpha(dom, spec.P)
        mats = _pmap(lambda a: matrix_oracle(dom, a, spec.P, table, n_theta=spec.fields.get("n_theta"),
                                             rel_tol=_tol(spec, 1e-10)), syms)
    elif method == "gamma":
        mats = [diagonal_matrix(compute_gamma(dom, a, spec.P)) for a in syms]
    else:
        raise SpecError("method must be 'oracle' or 'gamma'")
    return ["method", "frobenius_norm"], [[method, commutator_norm(*mats)]], None


def _complex_point(v, n):
    arr = np.asarray(v, dtype=float)
    if arr.shape != (n, 2):
        raise SpecError(f"complex points are lists of {n} [re, im] pairs")
    return arr[:, 0] + 1j * arr[:, 1]


def cmd_kernel(spec):
    dom = spec.domain
    series = KernelSeries(compute_alpha(dom, spec.P))
    rows = []
    for pair in spec.fields["pairs"]:
        if not isinstance(pair, dict) or set(pair) != {"z", "zeta"}:
            raise SpecError("each pair needs exactly 'z' and 'zeta'")
        z, w = _complex_point(pair["z"], dom.n), _complex_point(pair["zeta"], dom.n)
        if not (dom.contains(np.abs(z)) and dom.contains(np.abs(w))):
            raise SpecError("kernel points must lie inside the domain")
        k = kernel_eval(series, z, w)
        closed = (ball_kernel(z, w, dom.params.get("lambda", 0.0)) if dom.name == "ball-lambda"
                  else complex("nan"))
        rows.append([json.dumps(pair["z"]), json.dumps(pair["zeta"]), k.real, k.imag, closed.real, closed.imag,
                     series.last_shell_magnitude(z, w)])
    return ["z", "zeta", "K_re", "K_im", "closed_re", "closed_im", "last_shell"], rows, None


def _points(spec):
    n = spec.domain.n
    pts = [np.asarray(p, dtype=float) for p in spec.fields["points"]]
    if any(p.shape != (n,) for p in pts):
        raise SpecError(f"points must be lists of {n} radii")
    return pts


def cmd_metric(spec):
    dom = spec.domain
    source = geo.default_source(dom, spec.fields.get("P"))
    mode = spec.fields.get("mode", "series-termwise")
    n = dom.n
    Fs = _pmap(lambda r: geo.metric_components(source, r, mode), _points(spec))
    header = [f"r_{k + 1}" for k in range(n)] + [f"F_{k + 1}{l + 1}" for k in range(n) for l in range(n)]
    rows = [list(r) + list(F.ravel()) for r, F in zip(_points(spec), Fs)]
    return header, rows, {"source": source.kind, "mode": mode}


def cmd_curvature(spec):
    dom = spec.domain
    source = geo.default_source(dom, spec.fields.get("P"))
    if isinstance(source, geo.BallKernel) and source.lam != 0:
        source = geo.BallKernel(dom.n, 0.0)
    reports = _pmap(lambda r: geo.curvature_report(source, r), _points(spec))
    return geo.CurvatureReport.header(dom.n), [rep.row() for rep in reports], {"source": source.kind}


def cmd_asymptotics(spec):
    dom = spec.domain
    axis = spec.fields["axis"]
    if not isinstance(axis, int) or not 1 <= axis <= dom.n:
        raise SpecError(f"axis must be an integer between 1 and {dom.n}")
    scan = geo.boundary_asymptotics_scan(dom, axis - 1, spec.fields["direction"], spec.fields.get("distances"))
    header, rows = scan.rows()
    return header, rows, {"limit": scan.limit, "final_deviation": scan.final_deviation,
                          "monotone_tail": scan.monotone_tail(), "endpoint": list(map(float, scan.endpoint))}


def cmd_verify(spec):
    tol = spec.fields.get("tolerances", {})
    if not isinstance(tol, dict) or set(tol) - set(DEFAULT_TOLERANCES):
        raise SpecError(f"tolerances may override: {sorted(DEFAULT_TOLERANCES)}")
    results = run_suite(spec.domain, spec.fields.get("P", 4), tol, int(spec.fields.get("samples", 20)),
                        int(spec.fields.get("seed", 0)))
    rows = [[r.name, r.passed, r.observed, r.threshold] for r in results]
    return ["check", "passed", "observed", "threshold"], rows, {"all_passed": all(r.passed for r in results)}


COMMANDS = {
    "alpha": cmd_alpha, "gamma": cmd_gamma, "spectrum": cmd_spectrum, "oracle": cmd_oracle,
    "commutator": cmd_commutator, "kernel": cmd_kernel, "metric": cmd_metric, "curvature": cmd_curvature,
    "asymptotics": cmd_asymptotics, "verify": cmd_verify,
}


def describe(command: str) -> str:
    if command not in SCHEMAS:
        raise SpecError(f"unknown command {command!r}; known: {', '.join(SCHEMAS)}")
    s = SCHEMAS[command]
    lines = [f"{command}: {s['doc']}",
             f"  required: {', '.join(sorted(s['required']))}",
             f"  optional: {', '.join(sorted(s['optional'] | (COMMON - {'command'})))}"]
    if command == "verify":
        lines.append("  tolerance overrides: " + ", ".join(f"{k}={v:g}" for k, v in DEFAULT_TOLERANCES.items()))
    return "\n".join(lines)


def run(spec: RunSpec) -> tuple[int, str]:
    header, rows, extra = COMMANDS[spec.command](spec)
    text = render(spec, header, rows, extra)
    status = EXIT_OK
    if spec.command == "verify" and not extra["all_passed"]:
        status = EXIT_VERIFY
    return status, text


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="rtoep", description=__doc__.splitlines()[0])
    parser.add_argument("command", help="one of: " + ", ".join([*COMMANDS, "describe"]))
    parser.add_argument("target", nargs="?", help="command to describe")
    parser.add_argument("--spec", help="JSON run spec")
    parser.add_argument("--out", help="output path (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    try:
        if args.command == "describe":
            print(describe(args.target or ""))
            return EXIT_OK
        if args.spec is None:
            raise SpecError("--spec is required")
        try:
            with open(args.spec) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SpecError(f"cannot read spec: {exc}") from None
        spec = parse_spec(args.command, data, args.out, args.format)
        status, text = run(spec)
    except (SpecError, DomainError) as exc:
        print(f"rtoep: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NotConverged as exc:
        print(f"rtoep: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    if spec.out:
        with open(spec.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if status == EXIT_VERIFY:
        print("rtoep: verify found failing checks", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
