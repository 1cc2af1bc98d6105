"""Command-line front end.

The CLI is a thin client over the service layer: by default it invokes the
same request handlers in process, with ``--server URL`` it sends the identical
JSON over HTTP to a running instance.  Files are written atomically
(write-temp-rename) and all randomness is controlled by --seed.

Exit codes: 0 success, 1 validation or verdict failure, 2 runtime error
(unreadable input, singular solves everywhere, I/O).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import urllib.error
import urllib.request
from pathlib import Path
from typing import Any

from . import datasets, service
from .errors import EngineError, InvariantError, SpectralDataError
from .verify import GridSpec


class _RemoteError(Exception):
    def __init__(self, kind: str, message: str):
        self.kind = kind
        super().__init__(message)


def _atomic_write(path: str, text: str) -> None:
    target = Path(path)
    tmp = target.with_name(target.name + f".tmp-{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, target)


def _read_document(spec: str) -> dict[str, Any]:
    """Load a .bacurve document from a path or an @name bundled dataset."""
    if spec.startswith("@"):
        text = datasets.dataset_text(spec[1:])
    else:
        text = Path(spec).read_text()
    doc = json.loads(text)
    if not isinstance(doc, dict):
        raise SpectralDataError("top level must be a JSON object")
    return doc


def _call(args, endpoint: str, handler, request_model, payload: dict[str, Any]):
    """Dispatch one request in process or to --server."""
    if args.server:
        url = args.server.rstrip("/") + endpoint
        body = json.dumps(payload).encode()
        req = urllib.request.Request(url, data=body, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req) as resp:
                return json.loads(resp.read())
        except urllib.error.HTTPError as exc:
            detail = json.loads(exc.read() or b"{}").get("detail", {})
            if isinstance(detail, dict) and "kind" in detail:
                raise _RemoteError(detail["kind"], detail.get("message", "")) from exc
            raise _RemoteError("HTTPError", str(exc)) from exc
    return handler(request_model(**payload)).model_dump()


def _grid_payload(text: str | None, dimension_hint: int = 2) -> list[dict[str, Any]] | None:
    if text is None:
        return None
    spec = GridSpec.parse(text)
    return [{"min": lo, "max": hi, "count": count} for lo, hi, count in spec.axes]


def _base_payload(args) -> dict[str, Any]:
    payload: dict[str, Any] = {
        "document": _read_document(args.file),
        "solve_params": bool(getattr(args, "solve_params", False)),
    }
    if args.tol_pt is not None:
        payload["tol_pt"] = args.tol_pt
    if args.tol_res is not None:
        payload["tol_res"] = args.tol_res
    return payload


def _print_rules(rules: list[dict[str, Any]], only_failures: bool = False) -> None:
    for r in rules:
        if only_failures and r["status"] != "fail":
            continue
        residual = f"  residual={r['residual']:.3e}" if r.get("residual") is not None else ""
        detail = f"  ({r['detail']})" if r.get("detail") else ""
        print(f"  [{r['status']:>4s}] {r['rule']}{residual}{detail}")


def cmd_validate(args) -> int:
    resp = _call(args, "/validate", service.do_validate, service.ValidateRequest,
                 _base_payload(args))
    if args.json:
        print(json.dumps(resp, indent=2, sort_keys=True))
    else:
        _print_rules(resp["report"])
        for name, val in resp.get("solved_parameters", {}).items():
            print(f"  solved {name} = {val[0]:.17g}{val[1]:+.17g}j")
        print("validation:", "PASS" if resp["ok"] else "FAIL")
    return 0 if resp["ok"] else 1


def cmd_solve(args) -> int:
    payload = _base_payload(args)
    if args.u:
        payload["u"] = [[float(x) for x in spec.split(",")] for spec in args.u]
    elif args.grid:
        payload["grid"] = _grid_payload(args.grid)
    else:
        raise ValueError("pass --u or --grid")
    payload["seed"] = args.seed
    resp = _call(args, "/solve", service.do_solve, service.SolveRequest, payload)
    if resp["validation"] and not all(r["status"] != "fail" for r in resp["validation"]):
        _print_rules(resp["validation"], only_failures=True)
        print("validation: FAIL", file=sys.stderr)
        return 1
    if resp["n_gaps"] >= resp["n_rows"]:
        print("every sample was a gap (singular solves)", file=sys.stderr)
        return 2
    if args.out:
        _atomic_write(args.out, resp["csv"])
        print(f"wrote {resp['n_rows']} rows ({resp['n_gaps']} gaps) to {args.out}")
    else:
        sys.stdout.write(resp["csv"])
    return 0


def cmd_verify(args) -> int:
    payload = _base_payload(args)
    payload["grid"] = _grid_payload(args.grid)
    payload["seed"] = args.seed
    resp = _call(args, "/verify", service.do_verify, service.VerifyRequest, payload)
    if args.report:
        _atomic_write(args.report, json.dumps(resp, indent=2, sort_keys=True) + "\n")
    if args.json:
        print(json.dumps(resp, indent=2, sort_keys=True))
    else:
        print(f"{'check':26s} {'applicable':>10s} {'max residual':>13s} "
              f"{'threshold':>10s} {'samples':>8s} {'gaps':>5s} verdict")
        for c in resp["checks"]:
            mr = "-" if c["max_residual"] is None else f"{c['max_residual']:.3e}"
            verdict = "pass" if c["passed"] else "FAIL"
            if not c["applicable"]:
                verdict = "n/a"
            print(f"{c['name']:26s} {str(c['applicable']):>10s} {mr:>13s} "
                  f"{c['threshold']:>10.1e} {c['n_samples']:>8d} {c['n_gaps']:>5d} {verdict}")
        bad = [r for r in resp["validation"] if r["status"] == "fail"]
        if bad:
            print("validation failures:")
            _print_rules(bad)
        print("verify:", "PASS" if resp["ok"] else "FAIL")
    return 0 if resp["ok"] else 1


def cmd_residues(args) -> int:
    resp = _call(args, "/residues", service.do_residues, service.ResiduesRequest,
                 _base_payload(args))
    if getattr(args, "json", False):
        print(json.dumps(resp, indent=2, sort_keys=True))
        return 0 if resp["ok"] else 1
    if resp.get("reason"):
        print(resp["reason"], file=sys.stderr)
        return 1
    print(f"{'component':10s} {'point':10s} {'location':>22s} {'order':>5s} residue")
    for row in resp["rows"]:
        loc = row["location"]
        loc_s = "inf" if loc == "inf" else f"{loc[0]:.6g}{loc[1]:+.6g}j"
        res = row["residue"]
        print(f"{row['component']:10s} {row['point']:10s} {loc_s:>22s} {row['order']:>5d} "
              f"{res[0]:.12g}{res[1]:+.12g}j")
    cq = resp["common_q_residue"]
    print(f"Q residues equal: {resp['q_residues_equal']}  common value {cq[0]:.12g}{cq[1]:+.12g}j")
    for nd in resp["node_sums"]:
        t = nd["total"]
        print(f"node[{nd['index']}] weighted sum = {t[0]:.3e}{t[1]:+.3e}j  "
              f"residual {nd['residual']:.3e}")
    for name, val in resp.get("solved_parameters", {}).items():
        print(f"solved {name} = {val[0]:.17g}{val[1]:+.17g}j")
    return 0 if resp["ok"] else 1


def cmd_grid(args) -> int:
    payload = _base_payload(args)
    payload["grid"] = _grid_payload(args.grid)
    payload["seed"] = args.seed
    resp = _call(args, "/grid", service.do_grid, service.GridRequest, payload)
    if not resp["ok"]:
        print(resp["reason"], file=sys.stderr)
        return 1
    _atomic_write(args.svg, resp["svg"])
    print(f"wrote coordinate net ({resp['n_lines']} lines) to {args.svg}")
    return 0


def cmd_examples(args) -> int:
    if args.export:
        written = datasets.export_all(Path(args.export))
        for p in written:
            print(p)
        return 0
    if args.path:
        print(datasets.dataset_path(args.path))
        return 0
    for name in datasets.EXAMPLE_NAMES:
        print(name)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run(service.app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bacurve",
        description="Orthogonal curvilinear coordinates from spectral data on nodal rational curves",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_file=True):
        if with_file:
            p.add_argument("file", help=".bacurve file path, or @example1..@example3 for bundled data")
        p.add_argument("--server", default=None, help="base URL of a running service; default is in-process")
        p.add_argument("--seed", type=int, default=0, help="seed for probe points and sampling")
        p.add_argument("--tol-pt", type=float, default=None, dest="tol_pt",
                       help="point-coincidence tolerance (default 1e-9)")
        p.add_argument("--tol-res", type=float, default=None, dest="tol_res",
                       help="residual-check tolerance (default 1e-10)")
        p.add_argument("--solve-params", action="store_true", dest="solve_params",
                       help="solve unbound omega scale parameters from the node conditions")

    p = sub.add_parser("validate", help="check every structural hypothesis of the spectral data")
    common(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("solve", help="export coordinates x(u) as CSV")
    common(p)
    p.add_argument("--u", action="append", default=[],
                   help="flow point as comma-separated reals; repeatable")
    p.add_argument("--grid", default=None, help="grid as min:max:count per flow variable, comma-separated")
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("verify", help="run the full verification report over a flow grid")
    common(p)
    p.add_argument("--grid", default=None, help="grid spec; default -1:1:21 per variable")
    p.add_argument("--report", default=None, help="write the JSON report here")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("residues", help="print the residue table of Omega and the node sums")
    common(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_residues)

    p = sub.add_parser("grid", help="render the planar coordinate net as SVG")
    common(p)
    p.add_argument("--grid", default=None, help="grid spec; default -1:1:21 per variable")
    p.add_argument("--svg", required=True, help="SVG output path")
    p.set_defaults(fn=cmd_grid)

    p = sub.add_parser("examples", help="list, export or locate the bundled datasets")
    p.add_argument("--export", default=None, help="copy datasets and oracle files into a directory")
    p.add_argument("--path", default=None, help="print the path of one bundled dataset")
    p.set_defaults(fn=cmd_examples)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)

    return parser


_SYNTAX_KINDS = {"DataSyntaxError", "SchemaError"}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return 1
    except _RemoteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.kind == "InvariantError":
            return 1
        return 2
    except (EngineError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
