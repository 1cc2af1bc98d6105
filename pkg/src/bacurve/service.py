"""FastAPI service wrapping the engine.

Every command of the CLI maps to one POST endpoint taking the .bacurve
document inline; the handlers delegate to plain ``do_*`` functions so the CLI
can invoke the same logic in process without a running server.
"""
from __future__ import annotations

import json
from typing import Any, Literal

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import verify
from .config import DEFAULT_TOL, Tolerances
from .curve import (
    SpectralData,
    ValidationReport,
    check_form_divisor,
    check_involutions,
    check_residue_conditions,
    common_q_residue,
    node_condition_terms,
    parse_spectral_data,
    sigma_image_node,
    solve_scale_parameter,
    validate_structure,
)
from .datasets import EXAMPLE_NAMES, dataset_text
from .errors import (
    EngineError,
    Inconsistent,
    InvariantError,
    NoConstraint,
    UnboundParameter,
)
from .ratfun import is_inf, points_coincide
from .svg import render_coordinate_net

CSV_HEADER_STATUS = "status"


def _c2l(v: complex) -> list[float]:
    v = complex(v)
    return [v.real, v.imag]


# ---------------------------------------------------------------------------
# request / response models
# ---------------------------------------------------------------------------

class ToleranceOptions(BaseModel):
    tol_pt: float | None = None
    tol_res: float | None = None

    def resolve(self) -> Tolerances:
        return DEFAULT_TOL.replaced(self.tol_pt, self.tol_res)


class GridAxis(BaseModel):
    min: float
    max: float
    count: int = Field(ge=2)


class BaseRequest(ToleranceOptions):
    document: dict[str, Any]
    solve_params: bool = False


class RuleEntry(BaseModel):
    rule: str
    status: Literal["pass", "fail", "warn", "skip"]
    detail: str = ""
    residual: float | None = None


class ValidateRequest(BaseRequest):
    pass


class ValidateResponse(BaseModel):
    ok: bool
    report: list[RuleEntry]
    solved_parameters: dict[str, list[float]] = {}


class SolveRequest(BaseRequest):
    u: list[list[float]] | None = None
    grid: list[GridAxis] | None = None
    seed: int = 0


class SolveResponse(BaseModel):
    ok: bool
    csv: str
    n_rows: int
    n_gaps: int
    validation: list[RuleEntry] = []


class VerifyRequest(BaseRequest):
    grid: list[GridAxis] | None = None
    seed: int = 0


class CheckEntry(BaseModel):
    name: str
    applicable: bool
    detail: str = ""
    max_residual: float | None
    worst_u: list[float] | None
    n_samples: int
    n_gaps: int
    threshold: float
    passed: bool


class VerifyResponse(BaseModel):
    ok: bool
    passed: bool
    seed: int
    grid_shape: list[int]
    checks: list[CheckEntry]
    validation: list[RuleEntry] = []


class ResiduesRequest(BaseRequest):
    pass


class ResidueRow(BaseModel):
    component: str
    point: str
    location: list[float] | str
    order: int
    residue: list[float]


class NodeSumRow(BaseModel):
    index: int
    gluing: list[float]
    gluing_sigma: list[float]
    weighted_p: list[float]
    weighted_q: list[float]
    total: list[float]
    residual: float


class ResiduesResponse(BaseModel):
    ok: bool
    reason: str = ""
    rows: list[ResidueRow] = []
    q_residues_equal: bool = False
    common_q_residue: list[float] = [0.0, 0.0]
    node_sums: list[NodeSumRow] = []
    solved_parameters: dict[str, list[float]] = {}


class GridRequest(BaseRequest):
    grid: list[GridAxis] | None = None
    seed: int = 0


class GridResponse(BaseModel):
    ok: bool
    svg: str = ""
    reason: str = ""
    n_lines: int = 0


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _load(req: BaseRequest) -> tuple[SpectralData, dict[str, complex], Tolerances]:
    """Parse the document and optionally solve the free scale parameter."""
    tol = req.resolve()
    data = parse_spectral_data(json.dumps(req.document))
    solved: dict[str, complex] = {}
    if req.solve_params:
        for name in data.unbound_parameters():
            value, data = solve_scale_parameter(data, name, tol)
            solved[name] = value
    return data, solved, tol


def full_validation(data: SpectralData, tol: Tolerances) -> ValidationReport:
    report = validate_structure(data, tol)
    try:
        report.extend(check_form_divisor(data, tol))
        report.extend(check_residue_conditions(data, tol))
    except UnboundParameter as exc:
        report.add("omega parameters bound", False, str(exc))
    report.extend(check_involutions(data, tol))
    return report


def _rules(report: ValidationReport) -> list[RuleEntry]:
    return [RuleEntry(**entry) for entry in report.to_jsonable()]


def _grid_spec(axes: list[GridAxis] | None, dimension: int) -> verify.GridSpec:
    if axes is None:
        return verify.GridSpec.default(dimension)
    return verify.GridSpec(tuple((a.min, a.max, a.count) for a in axes))


def do_validate(req: ValidateRequest) -> ValidateResponse:
    try:
        data, solved, tol = _load(req)
    except InvariantError as exc:
        entry = RuleEntry(rule=exc.rule, status="fail", detail=str(exc))
        return ValidateResponse(ok=False, report=[entry])
    except (NoConstraint, Inconsistent) as exc:
        entry = RuleEntry(rule="solve scale parameter", status="fail", detail=str(exc))
        return ValidateResponse(ok=False, report=[entry])
    report = full_validation(data, tol)
    return ValidateResponse(
        ok=report.ok,
        report=_rules(report),
        solved_parameters={k: _c2l(v) for k, v in solved.items()},
    )


def _format_sig(v: float) -> str:
    return f"{v:.17g}"


def do_solve(req: SolveRequest) -> SolveResponse:
    data, _, tol = _load(req)
    validation = full_validation(data, tol)
    if not validation.ok:
        return SolveResponse(ok=False, csv="", n_rows=0, n_gaps=0, validation=_rules(validation))
    n = data.dimension
    if req.u is not None:
        points = [tuple(float(x) for x in pt) for pt in req.u]
        for pt in points:
            if len(pt) != n:
                raise ValueError(f"flow point {pt} has wrong length for dimension {n}")
    else:
        points = _grid_spec(req.grid, n).points()
    header = [f"u{k}" for k in range(1, n + 1)]
    for k in range(1, n + 1):
        header += [f"re_x{k}", f"im_x{k}"]
    header += ["orthogonality_residual", CSV_HEADER_STATUS]
    lines = [",".join(header)]
    gaps = 0
    samples = verify.parallel_map(lambda pt: verify.coordinates(data, pt, tol), points)
    for pt, sample in zip(points, samples):
        row = [_format_sig(v) for v in pt]
        if sample.solved:
            for v in sample.x:
                row += [_format_sig(v.real), _format_sig(v.imag)]
            row += [_format_sig(verify.orthogonality_residual(sample)), "solved"]
        else:
            gaps += 1
            row += [""] * (2 * n) + ["", "gap"]
        lines.append(",".join(row))
    csv_text = "\n".join(lines) + "\n"
    ok = gaps < len(points)
    return SolveResponse(ok=ok, csv=csv_text, n_rows=len(points), n_gaps=gaps,
                         validation=_rules(validation))


def do_verify(req: VerifyRequest) -> VerifyResponse:
    data, _, tol = _load(req)
    validation = full_validation(data, tol)
    grid = _grid_spec(req.grid, data.dimension)
    report = verify.run_report(data, grid, seed=req.seed, tol=tol)
    checks = [CheckEntry(**c.to_jsonable()) for c in report.checks.values()]
    return VerifyResponse(
        ok=validation.ok and report.passed,
        passed=report.passed,
        seed=req.seed,
        grid_shape=list(report.grid_shape),
        checks=checks,
        validation=_rules(validation),
    )


def do_residues(req: ResiduesRequest) -> ResiduesResponse:
    data, solved, tol = _load(req)
    if data.unbound_parameters():
        return ResiduesResponse(
            ok=False,
            reason=f"unbound parameters {list(data.unbound_parameters())}; "
                   "pass solve_params to determine them")
    rows: list[ResidueRow] = []
    for cid in data.components:
        omega = data.omega_form(cid, tol)
        labelled: list[tuple[str, Any]] = list(data.marked_points_on(cid))
        mirrors = [(f"sigma(R{k+1})", r) for k, r in enumerate(data.normalization)]
        mirrors += [(f"sigma(gamma{k+1})", g) for k, g in enumerate(data.psi_poles)]
        for label, src in mirrors:
            icid, iloc = data.sigma.map_point(src.component, src.location)
            if icid == cid and not any(points_coincide(loc, iloc, tol.tol_pt) for _, loc in labelled):
                labelled.append((label, iloc))
        labelled += [(f"node[{k}]", loc) for k, loc in enumerate(data.node_points_on(cid))]
        seen = []
        for label, loc in labelled:
            order = -omega.order_at(loc, tol)
            residue = omega.residue_or_zero(loc, tol)
            rows.append(ResidueRow(
                component=cid, point=label,
                location="inf" if is_inf(loc) else _c2l(loc),
                order=max(order, 0), residue=_c2l(residue)))
            seen.append(loc)
        for p, m in omega.value.poles:
            if not any(not is_inf(s) and abs(p - s) <= tol.tol_pt for s in seen):
                rows.append(ResidueRow(component=cid, point="other",
                                       location=_c2l(p), order=m,
                                       residue=_c2l(omega.residue(p, tol))))
    residue_report = check_residue_conditions(data, tol)
    q_equal = all(r.status != "fail" for r in residue_report.results if r.rule == "Q residues equal")
    node_rows = []
    for k, nd in enumerate(data.nodes):
        t1, t2 = node_condition_terms(data, nd, tol)
        _, lam_sigma = sigma_image_node(data, nd, data.sigma, tol.tol_pt)
        scale = max(abs(t1), abs(t2), 1e-300)
        node_rows.append(NodeSumRow(
            index=k, gluing=_c2l(nd.lam), gluing_sigma=_c2l(lam_sigma),
            weighted_p=_c2l(t1), weighted_q=_c2l(t2), total=_c2l(t1 + t2),
            residual=abs(t1 + t2) / scale))
    return ResiduesResponse(
        ok=residue_report.ok,
        rows=rows,
        q_residues_equal=q_equal,
        common_q_residue=_c2l(common_q_residue(data, tol)),
        node_sums=node_rows,
        solved_parameters={k: _c2l(v) for k, v in solved.items()},
    )


def do_grid(req: GridRequest) -> GridResponse:
    data, _, tol = _load(req)
    if data.dimension != 2:
        return GridResponse(ok=False, reason=f"grid rendering needs dimension 2, not {data.dimension}")
    if data.tau is None:
        return GridResponse(ok=False, reason="no antiholomorphic involution: coordinates are not certified real")
    validation = full_validation(data, tol)
    if not validation.ok:
        return GridResponse(ok=False, reason="validation failed: "
                            + "; ".join(r.rule for r in validation.failures()))
    grid = _grid_spec(req.grid, 2)
    n1, n2 = grid.shape
    points = grid.points()
    xy: list[list[tuple[float, float] | None]] = [[None] * n2 for _ in range(n1)]
    reality_threshold = 1e-8
    samples = verify.parallel_map(lambda pt: verify.coordinates(data, pt, tol), points)
    for idx, (pt, sample) in enumerate(zip(points, samples)):
        if not sample.solved:
            continue
        xscale = 1 + max(abs(v) for v in sample.x)
        if max(abs(v.imag) for v in sample.x) / xscale > reality_threshold:
            return GridResponse(ok=False, reason=f"reality residual exceeds {reality_threshold} at u={pt}")
        xy[idx // n2][idx % n2] = (sample.x[0].real, sample.x[1].real)
    svg = render_coordinate_net(xy)
    return GridResponse(ok=True, svg=svg, n_lines=n1 + n2)


# ---------------------------------------------------------------------------
# app
# ---------------------------------------------------------------------------

app = FastAPI(
    title="bacurve",
    description="Orthogonal curvilinear coordinates from spectral data on reducible nodal curves",
)


def _wrap(fn, req):
    try:
        return fn(req)
    except (EngineError, ValueError) as exc:
        # the error kind travels with the payload so thin clients can map
        # syntax problems and validation problems to different exit codes
        raise HTTPException(
            status_code=422,
            detail={"kind": type(exc).__name__, "message": str(exc)},
        ) from exc


@app.get("/health")
def health() -> dict[str, str]:
    return {"status": "ok"}


@app.get("/datasets")
def datasets() -> dict[str, list[str]]:
    return {"datasets": list(EXAMPLE_NAMES)}


@app.get("/datasets/{name}")
def dataset(name: str) -> dict[str, Any]:
    try:
        return json.loads(dataset_text(name))
    except KeyError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from exc


@app.post("/validate", response_model=ValidateResponse)
def validate_endpoint(req: ValidateRequest) -> ValidateResponse:
    return _wrap(do_validate, req)


@app.post("/solve", response_model=SolveResponse)
def solve_endpoint(req: SolveRequest) -> SolveResponse:
    return _wrap(do_solve, req)


@app.post("/verify", response_model=VerifyResponse)
def verify_endpoint(req: VerifyRequest) -> VerifyResponse:
    return _wrap(do_verify, req)


@app.post("/residues", response_model=ResiduesResponse)
def residues_endpoint(req: ResiduesRequest) -> ResiduesResponse:
    return _wrap(do_residues, req)


@app.post("/grid", response_model=GridResponse)
def grid_endpoint(req: GridRequest) -> GridResponse:
    return _wrap(do_grid, req)
