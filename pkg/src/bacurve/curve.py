"""Spectral data: the declarative curve model, its file format and validation.

A ``.bacurve`` document declares rational components, marked divisors (P, Q,
R, gamma), nodes with gluing constants, the involutions and the 1-form Omega.
Validation is split in two layers: the parser enforces local type invariants
(wrong shapes, zero gluing constants, index coverage), while the geometric
conditions that make the coordinate net orthogonal or real are reported rule by rule so
that corrupted instances can be diagnosed rather than rejected wholesale.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable

from .config import DEFAULT_TOL, Tolerances
from .errors import (
    DataSyntaxError,
    Inconsistent,
    InvariantError,
    NoConstraint,
    SchemaError,
    UnboundParameter,
)
from .ratfun import (
    INF,
    MobiusMap,
    Polynomial,
    RationalFunction,
    RationalOneForm,
    SpherePoint,
    is_inf,
    points_coincide,
)

SOLVE = "solve"


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EssentialPoint:
    component: str
    location: SpherePoint
    flow_index: int  # 1-based

    def k_value(self, z: SpherePoint) -> complex:
        """Local parameter k_j at z: k = z for P at infinity, 1/(z-p) else."""
        if is_inf(self.location):
            if is_inf(z):
                raise ZeroDivisionError("k undefined at its own essential point")
            return complex(z)
        if is_inf(z):
            return 0j
        return 1.0 / (complex(z) - self.location)

    def k_inverse_value(self, z: SpherePoint) -> complex:
        if is_inf(self.location):
            if is_inf(z):
                return 0j
            return 1.0 / complex(z)
        if is_inf(z):
            raise ZeroDivisionError("k^-1 infinite at infinity for a finite P")
        return complex(z) - self.location


@dataclass(frozen=True)
class QPoint:
    component: str
    location: SpherePoint
    coordinate_index: int  # 1-based


@dataclass(frozen=True)
class NormalizationPoint:
    component: str
    location: SpherePoint
    d: complex


@dataclass(frozen=True)
class PsiPole:
    component: str
    location: complex  # simple and finite by construction


@dataclass(frozen=True)
class NodeSide:
    component: str
    location: complex


@dataclass(frozen=True)
class Node:
    p: NodeSide
    q: NodeSide
    lam: complex


@dataclass(frozen=True)
class Involution:
    kind: str  # "sigma" | "tau"
    component_map: dict[str, str]
    mobius: dict[str, MobiusMap]

    def map_point(self, component: str, z: SpherePoint) -> tuple[str, SpherePoint]:
        return self.component_map[component], self.mobius[component](z)


@dataclass(frozen=True)
class ParamRef:
    name: str


@dataclass(frozen=True)
class OmegaComponent:
    numerator: Polynomial
    poles: tuple[tuple[complex, int], ...]
    scale: complex | ParamRef


@dataclass(frozen=True)
class SpectralData:
    dimension: int
    components: tuple[str, ...]
    essential_points: tuple[EssentialPoint, ...]
    q_points: tuple[QPoint, ...]
    normalization: tuple[NormalizationPoint, ...]
    psi_poles: tuple[PsiPole, ...]
    nodes: tuple[Node, ...]
    sigma: Involution
    tau: Involution | None
    omega: dict[str, OmegaComponent]
    parameters: dict[str, complex | str] = field(default_factory=dict)

    # --- convenience views ---------------------------------------------

    def essential_on(self, cid: str) -> tuple[EssentialPoint, ...]:
        return tuple(p for p in self.essential_points if p.component == cid)

    def poles_on(self, cid: str) -> tuple[PsiPole, ...]:
        return tuple(p for p in self.psi_poles if p.component == cid)

    def q_by_index(self, j: int) -> QPoint:
        for q in self.q_points:
            if q.coordinate_index == j:
                return q
        raise KeyError(f"no Q point with coordinate index {j}")

    def essential_by_flow(self, j: int) -> EssentialPoint:
        for p in self.essential_points:
            if p.flow_index == j:
                return p
        raise KeyError(f"no essential point with flow index {j}")

    def unknown_labels(self) -> tuple[tuple[str, str | complex], ...]:
        """One constant per component plus one pole coefficient per psi pole."""
        labels: list[tuple[str, str | complex]] = []
        for cid in self.components:
            labels.append((cid, "const"))
            for g in self.poles_on(cid):
                labels.append((cid, g.location))
        return tuple(labels)

    def unbound_parameters(self) -> tuple[str, ...]:
        return tuple(k for k, v in self.parameters.items() if v == SOLVE)

    def bind_parameters(self, values: dict[str, complex]) -> "SpectralData":
        params = dict(self.parameters)
        for k, v in values.items():
            if k not in params:
                raise SchemaError(f"unknown parameter {k!r}")
            params[k] = complex(v)
        return replace(self, parameters=params)

    def omega_form(self, cid: str, tol: Tolerances = DEFAULT_TOL) -> RationalOneForm:
        spec = self.omega[cid]
        scale = spec.scale
        if isinstance(scale, ParamRef):
            bound = self.parameters.get(scale.name, SOLVE)
            if bound == SOLVE:
                raise UnboundParameter(f"omega parameter {scale.name!r} is unbound")
            scale = bound
        return RationalOneForm(RationalFunction(spec.numerator, spec.poles, scale, tol=tol))

    def marked_points_on(self, cid: str) -> list[tuple[str, SpherePoint]]:
        """All (label, location) marked points on a component, nodes excluded."""
        out: list[tuple[str, SpherePoint]] = []
        out += [(f"P{p.flow_index}", p.location) for p in self.essential_on(cid)]
        out += [(f"Q{q.coordinate_index}", q.location) for q in self.q_points if q.component == cid]
        out += [(f"R{k+1}", r.location) for k, r in enumerate(self.normalization) if r.component == cid]
        out += [(f"gamma{k+1}", g.location) for k, g in enumerate(self.psi_poles) if g.component == cid]
        return out

    def node_points_on(self, cid: str) -> list[complex]:
        pts = [n.p.location for n in self.nodes if n.p.component == cid]
        pts += [n.q.location for n in self.nodes if n.q.component == cid]
        return pts

    def arithmetic_genus(self) -> int:
        return len(self.nodes) - len(self.components) + 1


# ---------------------------------------------------------------------------
# validation report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RuleResult:
    rule: str
    status: str  # pass | fail | warn | skip
    detail: str = ""
    residual: float | None = None


@dataclass
class ValidationReport:
    results: list[RuleResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.status != "fail" for r in self.results)

    def add(self, rule: str, passed: bool, detail: str = "", residual: float | None = None):
        self.results.append(RuleResult(rule, "pass" if passed else "fail", detail, residual))

    def warn(self, rule: str, detail: str):
        self.results.append(RuleResult(rule, "warn", detail))

    def skip(self, rule: str, detail: str):
        self.results.append(RuleResult(rule, "skip", detail))

    def extend(self, other: "ValidationReport"):
        self.results.extend(other.results)

    def failures(self) -> list[RuleResult]:
        return [r for r in self.results if r.status == "fail"]

    def to_jsonable(self) -> list[dict[str, Any]]:
        return [
            {"rule": r.rule, "status": r.status, "detail": r.detail, "residual": r.residual}
            for r in self.results
        ]


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _parse_complex(v: Any, where: str) -> complex:
    if isinstance(v, bool):
        raise SchemaError(f"{where}: expected a number, got a boolean")
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        return complex(v[0], v[1])
    raise SchemaError(f"{where}: expected [re, im] or a real number, got {v!r}")


def _parse_point(v: Any, where: str) -> SpherePoint:
    if v == "inf":
        return INF
    return _parse_complex(v, where)


def _require(obj: dict, key: str, where: str) -> Any:
    if key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    return obj[key]


def _parse_involution(obj: Any, kind: str, components: tuple[str, ...]) -> Involution:
    where = kind
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    cmap_raw = _require(obj, "component_map", where)
    mob_raw = _require(obj, "mobius", where)
    conjugating = bool(obj.get("conjugating", kind == "tau"))
    cmap = {str(k): str(v) for k, v in cmap_raw.items()}
    for cid in components:
        if cid not in cmap:
            raise SchemaError(f"{where}: component_map misses component {cid!r}")
        if cmap[cid] not in components:
            raise SchemaError(f"{where}: component_map target {cmap[cid]!r} unknown")
    mobius = {}
    for cid in components:
        if cid not in mob_raw:
            raise SchemaError(f"{where}: mobius matrix missing for component {cid!r}")
        m = mob_raw[cid]
        if not (isinstance(m, list) and len(m) == 2 and all(isinstance(row, list) and len(row) == 2 for row in m)):
            raise SchemaError(f"{where}: mobius for {cid!r} must be [[a, b], [c, d]]")
        a = _parse_complex(m[0][0], f"{where}.{cid}.a")
        b = _parse_complex(m[0][1], f"{where}.{cid}.b")
        c = _parse_complex(m[1][0], f"{where}.{cid}.c")
        d = _parse_complex(m[1][1], f"{where}.{cid}.d")
        mobius[cid] = MobiusMap(a, b, c, d, conjugating=conjugating)
    return Involution(kind=kind, component_map=cmap, mobius=mobius)


def parse_spectral_data(text: str) -> SpectralData:
    """Parse and locally validate a .bacurve document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataSyntaxError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("top level must be a JSON object")

    n = _require(doc, "dimension", "document")
    if not isinstance(n, int) or n < 1:
        raise SchemaError("dimension must be a positive integer")

    comps_raw = _require(doc, "components", "document")
    if not isinstance(comps_raw, list) or not comps_raw:
        raise SchemaError("components must be a non-empty list of ids")
    components = tuple(str(c) for c in comps_raw)
    if len(set(components)) != len(components):
        raise InvariantError("component ids unique")

    def check_component(cid: str, where: str) -> str:
        if cid not in components:
            raise SchemaError(f"{where}: unknown component {cid!r}")
        return cid

    essential = []
    for k, e in enumerate(_require(doc, "essential_points", "document")):
        where = f"essential_points[{k}]"
        essential.append(EssentialPoint(
            component=check_component(str(_require(e, "component", where)), where),
            location=_parse_point(_require(e, "location", where), where),
            flow_index=int(_require(e, "flow_index", where)),
        ))
    if sorted(p.flow_index for p in essential) != list(range(1, n + 1)):
        raise InvariantError("flow_index values exactly 1..n",
                             f"got {sorted(p.flow_index for p in essential)}")

    qpoints = []
    for k, q in enumerate(_require(doc, "q_points", "document")):
        where = f"q_points[{k}]"
        qpoints.append(QPoint(
            component=check_component(str(_require(q, "component", where)), where),
            location=_parse_point(_require(q, "location", where), where),
            coordinate_index=int(_require(q, "coordinate_index", where)),
        ))
    if sorted(q.coordinate_index for q in qpoints) != list(range(1, n + 1)):
        raise InvariantError("coordinate_index values exactly 1..n")

    norm = []
    for k, r in enumerate(_require(doc, "normalization", "document")):
        where = f"normalization[{k}]"
        norm.append(NormalizationPoint(
            component=check_component(str(_require(r, "component", where)), where),
            location=_parse_point(_require(r, "location", where), where),
            d=_parse_complex(_require(r, "d", where), where),
        ))
    if not norm:
        raise SchemaError("normalization must list at least one point")
    if all(abs(r.d) == 0 for r in norm):
        raise InvariantError("at least one d nonzero")

    poles = []
    for k, g in enumerate(doc.get("psi_poles", [])):
        where = f"psi_poles[{k}]"
        loc = _parse_point(_require(g, "location", where), where)
        if is_inf(loc):
            raise InvariantError("psi poles finite", where)
        poles.append(PsiPole(
            component=check_component(str(_require(g, "component", where)), where),
            location=loc,
        ))

    nodes = []
    for k, nd in enumerate(doc.get("nodes", [])):
        where = f"nodes[{k}]"
        sides = []
        for side in ("p", "q"):
            s = _require(nd, side, where)
            loc = _parse_point(_require(s, "location", f"{where}.{side}"), f"{where}.{side}")
            if is_inf(loc):
                raise InvariantError("node points finite", where)
            sides.append(NodeSide(
                component=check_component(str(_require(s, "component", f"{where}.{side}")), where),
                location=loc,
            ))
        lam = _parse_complex(_require(nd, "lambda", where), where)
        if abs(lam) == 0:
            raise InvariantError("lambda != 0", where)
        if sides[0] == sides[1]:
            raise InvariantError("node sides distinct", where)
        nodes.append(Node(p=sides[0], q=sides[1], lam=lam))

    sigma = _parse_involution(_require(doc, "sigma", "document"), "sigma", components)
    tau = None
    if doc.get("tau") is not None:
        tau = _parse_involution(doc["tau"], "tau", components)

    omega_raw = _require(doc, "omega", "document")
    omega: dict[str, OmegaComponent] = {}
    for cid in components:
        if cid not in omega_raw:
            raise SchemaError(f"omega: missing form for component {cid!r}")
        o = omega_raw[cid]
        where = f"omega.{cid}"
        num = Polynomial(_parse_complex(c, f"{where}.numerator[{i}]")
                         for i, c in enumerate(_require(o, "numerator", where)))
        opoles = []
        for i, p in enumerate(_require(o, "poles", where)):
            loc = _parse_complex(_require(p, "location", f"{where}.poles[{i}]"), where)
            order = int(_require(p, "order", f"{where}.poles[{i}]"))
            if order < 1:
                raise SchemaError(f"{where}.poles[{i}]: order must be >= 1")
            opoles.append((loc, order))
        sc_raw = _require(o, "scale", where)
        scale: complex | ParamRef
        if isinstance(sc_raw, dict):
            scale = ParamRef(str(_require(sc_raw, "param", where)))
        else:
            scale = _parse_complex(sc_raw, f"{where}.scale")
        # constructing the rational function validates pole separation
        RationalFunction(num, opoles, 1.0)
        omega[cid] = OmegaComponent(numerator=num, poles=tuple(opoles), scale=scale)

    params_raw = doc.get("parameters", {})
    parameters: dict[str, complex | str] = {}
    for name, v in params_raw.items():
        parameters[str(name)] = SOLVE if v == SOLVE else _parse_complex(v, f"parameters.{name}")
    referenced = {o.scale.name for o in omega.values() if isinstance(o.scale, ParamRef)}
    for name in parameters:
        if name not in referenced:
            raise InvariantError("parameter appears in a component form", name)
    for name in referenced:
        if name not in parameters:
            raise SchemaError(f"omega references undeclared parameter {name!r}")

    return SpectralData(
        dimension=n,
        components=components,
        essential_points=tuple(essential),
        q_points=tuple(qpoints),
        normalization=tuple(norm),
        psi_poles=tuple(poles),
        nodes=tuple(nodes),
        sigma=sigma,
        tau=tau,
        omega=omega,
        parameters=parameters,
    )


def _point_jsonable(p: SpherePoint) -> Any:
    if is_inf(p):
        return "inf"
    return [p.real, p.imag]


def _complex_jsonable(c: complex) -> list[float]:
    c = complex(c)
    return [c.real, c.imag]


def _involution_jsonable(inv: Involution) -> dict[str, Any]:
    conjugating = any(m.conjugating for m in inv.mobius.values())
    return {
        "component_map": dict(inv.component_map),
        "mobius": {
            cid: [[_complex_jsonable(m.a), _complex_jsonable(m.b)],
                  [_complex_jsonable(m.c), _complex_jsonable(m.d)]]
            for cid, m in inv.mobius.items()
        },
        "conjugating": conjugating,
    }


def serialize_spectral_data(data: SpectralData) -> str:
    doc: dict[str, Any] = {
        "dimension": data.dimension,
        "components": list(data.components),
        "essential_points": [
            {"component": p.component, "location": _point_jsonable(p.location), "flow_index": p.flow_index}
            for p in data.essential_points
        ],
        "q_points": [
            {"component": q.component, "location": _point_jsonable(q.location), "coordinate_index": q.coordinate_index}
            for q in data.q_points
        ],
        "normalization": [
            {"component": r.component, "location": _point_jsonable(r.location), "d": _complex_jsonable(r.d)}
            for r in data.normalization
        ],
        "psi_poles": [
            {"component": g.component, "location": _point_jsonable(g.location)} for g in data.psi_poles
        ],
        "nodes": [
            {
                "p": {"component": nd.p.component, "location": _point_jsonable(nd.p.location)},
                "q": {"component": nd.q.component, "location": _point_jsonable(nd.q.location)},
                "lambda": _complex_jsonable(nd.lam),
            }
            for nd in data.nodes
        ],
        "sigma": _involution_jsonable(data.sigma),
        "omega": {
            cid: {
                "numerator": [_complex_jsonable(c) for c in o.numerator.coeffs],
                "poles": [{"location": _complex_jsonable(p), "order": m} for p, m in o.poles],
                "scale": {"param": o.scale.name} if isinstance(o.scale, ParamRef) else _complex_jsonable(o.scale),
            }
            for cid, o in data.omega.items()
        },
        "parameters": {
            k: (v if v == SOLVE else _complex_jsonable(v)) for k, v in data.parameters.items()
        },
    }
    if data.tau is not None:
        doc["tau"] = _involution_jsonable(data.tau)
    return json.dumps(doc, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# structural validation
# ---------------------------------------------------------------------------

_PROBE_POINTS = (0.37 + 0.21j, -1.4 + 0.9j, 2.5 - 0.3j, 0.11 - 1.7j)


def _connected(data: SpectralData) -> bool:
    if not data.components:
        return False
    adj: dict[str, set[str]] = {cid: set() for cid in data.components}
    for nd in data.nodes:
        adj[nd.p.component].add(nd.q.component)
        adj[nd.q.component].add(nd.p.component)
    seen = {data.components[0]}
    stack = [data.components[0]]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == len(data.components)


def _involution_is_involutive(inv: Involution, tol: float) -> tuple[bool, str]:
    for cid, target in inv.component_map.items():
        if inv.component_map[target] != cid:
            return False, f"component map not involutive at {cid}"
    for cid in inv.component_map:
        m1 = inv.mobius[cid]
        m2 = inv.mobius[inv.component_map[cid]]
        for z in _PROBE_POINTS:
            w = m2(m1(z))
            if is_inf(w) or abs(w - z) > tol * (1 + abs(z)):
                return False, f"pointwise map not involutive on {cid}"
    return True, ""


def sigma_image_node(data: SpectralData, node: Node, inv: Involution,
                     tol: float = DEFAULT_TOL.tol_pt) -> tuple[Node, complex] | None:
    """The image node of ``node`` under an involution, with its gluing constant.

    The constant is read off the image node, inverted when the stored image
    has its sides in the opposite order.
    """
    ip_comp, ip_loc = inv.map_point(node.p.component, node.p.location)
    iq_comp, iq_loc = inv.map_point(node.q.component, node.q.location)
    if is_inf(ip_loc) or is_inf(iq_loc):
        return None
    for cand in data.nodes:
        if (cand.p.component == ip_comp and points_coincide(cand.p.location, ip_loc, tol)
                and cand.q.component == iq_comp and points_coincide(cand.q.location, iq_loc, tol)):
            return cand, cand.lam
        if (cand.p.component == iq_comp and points_coincide(cand.p.location, iq_loc, tol)
                and cand.q.component == ip_comp and points_coincide(cand.q.location, ip_loc, tol)):
            return cand, 1.0 / cand.lam
    return None


def validate_structure(data: SpectralData, tol: Tolerances = DEFAULT_TOL) -> ValidationReport:
    """Structural conditions for an orthogonal net that need no section solve."""
    rep = ValidationReport()

    n_unknowns = len(data.components) + len(data.psi_poles)
    n_conditions = len(data.nodes) + len(data.normalization)
    rep.add("square-system count", n_unknowns == n_conditions,
            f"{n_unknowns} unknowns vs {n_conditions} conditions")

    rep.add("curve connected", _connected(data))

    g_a = data.arithmetic_genus()
    want = g_a + len(data.normalization) - 1
    rep.add("arithmetic-genus divisor count", len(data.psi_poles) == want,
            f"#gamma={len(data.psi_poles)}, g_a={g_a}, l={len(data.normalization)}, expected {want}")

    # pairwise distinctness of marked points per component
    ok, detail = True, ""
    for cid in data.components:
        marked = data.marked_points_on(cid)
        for i in range(len(marked)):
            for j in range(i + 1, len(marked)):
                if points_coincide(marked[i][1], marked[j][1], tol.tol_pt):
                    ok, detail = False, f"{marked[i][0]} and {marked[j][0]} coincide on {cid}"
    rep.add("marked points distinct", ok, detail)

    ok, detail = True, ""
    for cid in data.components:
        marked = data.marked_points_on(cid)
        for np_ in data.node_points_on(cid):
            for label, loc in marked:
                if points_coincide(loc, np_, tol.tol_pt):
                    ok, detail = False, f"node point {np_} meets {label} on {cid}"
    rep.add("nodes distinct from marked points", ok, detail)

    ok, detail = _involution_is_involutive(data.sigma, tol.tol_pt)
    rep.add("sigma involutive", ok, detail)

    ok, detail = True, ""
    for pt in list(data.essential_points) + list(data.q_points):
        cid2, loc2 = data.sigma.map_point(pt.component, pt.location)
        if cid2 != pt.component or not points_coincide(loc2, pt.location, tol.tol_pt):
            ok, detail = False, f"sigma moves {pt}"
    rep.add("sigma fixes P and Q", ok, detail)

    # sigma(k_j) = -k_j: the Mobius map of sigma on the component of P_j must
    # conjugate the local parameter to its negative; checked at probe points
    ok, detail = True, ""
    for p in data.essential_points:
        m = data.sigma.mobius[p.component]
        for z in _PROBE_POINTS:
            try:
                got = p.k_value(m(z))
                want_k = -p.k_value(z)
            except ZeroDivisionError:
                continue
            if abs(got - want_k) > tol.tol_pt * (1 + abs(want_k)):
                ok, detail = False, f"sigma does not negate k_{p.flow_index}"
    rep.add("sigma negates local parameters", ok, detail)

    ok, detail = True, ""
    for nd in data.nodes:
        if sigma_image_node(data, nd, data.sigma, tol.tol_pt) is None:
            ok, detail = False, f"sigma image of node {nd.p.location}/{nd.q.location} not in node set"
    rep.add("sigma maps nodes to nodes", ok, detail)

    ok, detail = True, ""
    for g in data.psi_poles:
        for p in data.essential_on(g.component):
            if points_coincide(g.location, p.location, tol.tol_pt):
                ok, detail = False, f"psi pole at essential point {g.location}"
    rep.add("psi poles avoid essential points", ok, detail)

    for cid in data.components:
        if not data.essential_on(cid) and not data.poles_on(cid):
            rep.warn("component ansatz nonconstant",
                     f"component {cid} carries no essential point and no psi pole; "
                     "its section is a constant")

    return rep


def _required_divisors(data: SpectralData, cid: str, tol: Tolerances):
    """Required zero and pole multiplicity per point of Omega on one component."""
    def bump(table: list[tuple[SpherePoint, int]], loc: SpherePoint):
        for k, (q, m) in enumerate(table):
            if points_coincide(q, loc, tol.tol_pt):
                table[k] = (q, m + 1)
                return
        table.append((loc, 1))

    zeros: list[tuple[SpherePoint, int]] = []
    for p in data.essential_on(cid):
        bump(zeros, p.location)
    for g in data.psi_poles:
        if g.component == cid:
            bump(zeros, g.location)
        gcid, gloc = data.sigma.map_point(g.component, g.location)
        if gcid == cid:
            bump(zeros, gloc)

    poles: list[tuple[SpherePoint, int]] = []
    for q in data.q_points:
        if q.component == cid:
            bump(poles, q.location)
    for r in data.normalization:
        if r.component == cid:
            bump(poles, r.location)
        rcid, rloc = data.sigma.map_point(r.component, r.location)
        if rcid == cid:
            bump(poles, rloc)
    for loc in data.node_points_on(cid):
        bump(poles, loc)
    return zeros, poles


def check_form_divisor(data: SpectralData, tol: Tolerances = DEFAULT_TOL) -> ValidationReport:
    """Divisor shape of Omega: zeros at P + gamma + sigma(gamma), poles at
    Q + R + sigma(R) + nodes, and nothing else."""
    rep = ValidationReport()
    for cid in data.components:
        omega = data.omega_form(cid, tol)
        zeros, poles = _required_divisors(data, cid, tol)
        for loc, mult in zeros:
            got = omega.order_at(loc, tol)
            rep.add(f"omega zero at divisor point [{cid}]", got == mult,
                    f"order {got} at {loc}, required {mult}")
        for loc, mult in poles:
            got = omega.order_at(loc, tol)
            rep.add(f"omega pole at divisor point [{cid}]", got == -mult,
                    f"order {got} at {loc}, required {-mult}")
        # no poles beyond the required ones (infinity included via order_at)
        extra = ""
        for p, m in omega.value.poles:
            if not any(not is_inf(loc) and points_coincide(p, loc, tol.tol_pt) for loc, _ in poles):
                extra = f"unexpected pole at {p} (order {m})"
        if omega.order_at(INF, tol) < 0 and not any(is_inf(loc) for loc, _ in poles):
            extra = "unexpected pole at infinity"
        rep.add(f"omega has no other poles [{cid}]", not extra, extra)
    return rep


def _q_residues(data: SpectralData, tol: Tolerances) -> list[tuple[int, complex]]:
    out = []
    for q in sorted(data.q_points, key=lambda q: q.coordinate_index):
        omega = data.omega_form(q.component, tol)
        out.append((q.coordinate_index, omega.residue_or_zero(q.location, tol)))
    return out


def common_q_residue(data: SpectralData, tol: Tolerances = DEFAULT_TOL) -> complex:
    """The common residue of Omega at the Q points (the coordinate scaling)."""
    values = [v for _, v in _q_residues(data, tol)]
    return sum(values) / len(values)


def node_condition_terms(data: SpectralData, node: Node, tol: Tolerances = DEFAULT_TOL):
    """(lambda * lambda_sigma * Res_a Omega_p, Res_b Omega_q) for one node."""
    image = sigma_image_node(data, node, data.sigma, tol.tol_pt)
    if image is None:
        raise InvariantError("sigma maps nodes to nodes", str(node))
    _, lam_sigma = image
    omega_p = data.omega_form(node.p.component, tol)
    omega_q = data.omega_form(node.q.component, tol)
    res_a = omega_p.residue_or_zero(node.p.location, tol)
    res_b = omega_q.residue_or_zero(node.q.location, tol)
    return node.lam * lam_sigma * res_a, res_b


def check_residue_conditions(data: SpectralData, tol: Tolerances = DEFAULT_TOL) -> ValidationReport:
    """Equality of the Q residues and the weighted node cancellation."""
    rep = ValidationReport()
    rvals = _q_residues(data, tol)
    mean = sum(v for _, v in rvals) / len(rvals)
    spread = max(abs(v - mean) for _, v in rvals)
    scale = max(1e-300, max(abs(v) for _, v in rvals))
    rep.add("Q residues equal", spread <= tol.tol_res * (1 + scale) or spread <= tol.tol_res,
            f"values {[v for _, v in rvals]}", residual=spread / scale)
    if abs(mean - 1) > tol.tol_res * (1 + abs(mean)):
        rep.warn("Q residue normalization",
                 f"common residue {mean} != 1; coordinates are scaled by it uniformly")

    for k, nd in enumerate(data.nodes):
        try:
            t1, t2 = node_condition_terms(data, nd, tol)
        except InvariantError as exc:
            rep.add(f"node residue cancellation [{k}]", False, f"no sigma-image node: {exc}")
            continue
        scale = max(abs(t1), abs(t2), 1e-300)
        resid = abs(t1 + t2) / scale
        rep.add(f"node residue cancellation [{k}]", resid <= tol.tol_res,
                f"lam*lam_sigma*Res_a={t1}, Res_b={t2}", residual=resid)
    return rep


def solve_scale_parameter(data: SpectralData, name: str | None = None,
                          tol: Tolerances = DEFAULT_TOL) -> tuple[complex, SpectralData]:
    """Solve the single free multiplicative scale from a node condition.

    Returns the value and the data with the parameter bound; the remaining
    node conditions and the Q-residue equality are then re-verified.
    """
    unbound = data.unbound_parameters()
    if name is None:
        if len(unbound) != 1:
            raise NoConstraint(f"expected exactly one unbound parameter, found {list(unbound)}")
        name = unbound[0]
    elif name not in unbound:
        raise NoConstraint(f"parameter {name!r} is not unbound")

    carriers = [cid for cid, o in data.omega.items()
                if isinstance(o.scale, ParamRef) and o.scale.name == name]
    if len(carriers) != 1:
        raise NoConstraint(f"parameter {name!r} must scale exactly one component form")
    cid = carriers[0]

    probe = data.bind_parameters({name: 1.0})
    for nd in data.nodes:
        touches_p = nd.p.component == cid
        touches_q = nd.q.component == cid
        if not (touches_p or touches_q):
            continue
        t1, t2 = node_condition_terms(probe, nd, tol)
        # the parameterized side is linear in the parameter
        if touches_p and not touches_q:
            if abs(t1) == 0:
                continue
            value = -t2 / t1
        elif touches_q and not touches_p:
            if abs(t2) == 0:
                continue
            value = -t1 / t2
        else:
            continue  # both sides scale together: condition is parameter-free
        bound = data.bind_parameters({name: value})
        residues = check_residue_conditions(bound, tol)
        if not residues.ok:
            raise Inconsistent(
                f"solved {name} = {value} but conditions still fail: "
                f"{[r.rule for r in residues.failures()]}", value)
        return value, bound
    raise NoConstraint(f"no node condition constrains parameter {name!r}")


def check_involutions(data: SpectralData, tol: Tolerances = DEFAULT_TOL) -> ValidationReport:
    """Involution compatibility: the sigma rules behind orthogonality and, when
    tau is present, the pairing rules behind real-valued coordinates."""
    rep = ValidationReport()

    for inv in (data.sigma, data.tau):
        if inv is None:
            continue
        tag = inv.kind
        ok, detail = _involution_is_involutive(inv, tol.tol_pt)
        rep.add(f"{tag} involutive", ok, detail)

        ok, detail = True, ""
        for pt in list(data.essential_points) + list(data.q_points):
            cid2, loc2 = inv.map_point(pt.component, pt.location)
            if cid2 != pt.component or not points_coincide(loc2, pt.location, tol.tol_pt):
                ok, detail = False, f"{tag} moves {pt}"
        rep.add(f"{tag} fixes P and Q", ok, detail)

        ok, detail = True, ""
        for nd in data.nodes:
            if sigma_image_node(data, nd, inv, tol.tol_pt) is None:
                ok, detail = False, f"{tag} image of node {nd.p.location}/{nd.q.location} missing"
        rep.add(f"{tag} maps nodes to nodes", ok, detail)

    if data.tau is None:
        rep.skip("tau pairing rules", "no antiholomorphic involution declared")
        return rep

    tau = data.tau

    def image_in(points: Iterable[SpherePoint], cid: str, loc: SpherePoint) -> bool:
        icid, iloc = tau.map_point(cid, loc)
        return any(p[0] == icid and points_coincide(p[1], iloc, tol.tol_pt) for p in points)

    rset = [(r.component, r.location) for r in data.normalization]
    rep.add("tau maps R set to itself",
            all(image_in(rset, r.component, r.location) for r in data.normalization))
    gset = [(g.component, g.location) for g in data.psi_poles]
    rep.add("tau maps gamma set to itself",
            all(image_in(gset, g.component, g.location) for g in data.psi_poles))

    # k^-1(tau(z)) == conj(k^-1(z)) at probe points
    ok, detail = True, ""
    for p in data.essential_points:
        m = tau.mobius[p.component]
        for z in _PROBE_POINTS:
            try:
                got = p.k_inverse_value(m(z))
                want = p.k_inverse_value(z).conjugate()
            except ZeroDivisionError:
                continue
            if abs(got - want) > tol.tol_pt * (1 + abs(want)):
                ok, detail = False, f"tau does not conjugate k_{p.flow_index}^-1"
    rep.add("tau conjugates local parameters", ok, detail)

    ok, detail = True, ""
    for r in data.normalization:
        icid, iloc = tau.map_point(r.component, r.location)
        partner = next((s for s in data.normalization
                        if s.component == icid and points_coincide(s.location, iloc, tol.tol_pt)), None)
        if partner is None or abs(r.d.conjugate() - partner.d) > tol.tol_pt * (1 + abs(r.d)):
            ok, detail = False, f"conj(d) mismatch at R={r.location}"
    rep.add("tau pairs normalization values", ok, detail)

    ok, detail = True, ""
    for nd in data.nodes:
        image = sigma_image_node(data, nd, tau, tol.tol_pt)
        if image is None:
            ok, detail = False, "tau image node missing"
            continue
        _, lam_tau = image
        if abs(nd.lam.conjugate() - lam_tau) > tol.tol_pt * (1 + abs(nd.lam)):
            ok, detail = False, f"conj(lambda)={nd.lam.conjugate()} vs lambda_tau={lam_tau}"
    rep.add("tau pairs gluing constants", ok, detail)

    try:
        ok, detail = True, ""
        for cid in data.components:
            target = tau.component_map[cid]
            pulled = data.omega_form(target, tol).pullback(tau.mobius[cid])
            want = data.omega_form(cid, tol).conj_coefficients()
            if not pulled.is_close(want, rtol=1e-9):
                ok, detail = False, f"tau pullback of Omega differs on {cid}"
        rep.add("tau pullback of Omega is conj(Omega)", ok, detail)
    except UnboundParameter:
        rep.skip("tau pullback of Omega is conj(Omega)", "omega parameters unbound")

    return rep
