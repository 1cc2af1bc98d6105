"""Numerical verdicts: orthogonality, reality, Egorov structure and the
second-order flow equation, plus residue instrumentation of the
cancellation form.

Every residual is normalized by the natural magnitude of its terms, so the
verdicts are invariant under rescaling the normalization values d_j or the
gluing constants.  Checks whose hypotheses fail are reported not applicable,
never silently passed.  Grid evaluation maps over samples in a thread pool
(everything here is pure) and reduces in sample order, so reports are
deterministic regardless of scheduling.
"""
from __future__ import annotations

import cmath
import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, TypeVar

import numpy as np

from . import basolver
from .config import CHECK_THRESHOLDS, DEFAULT_TOL, Tolerances
from .curve import SpectralData, common_q_residue
from .errors import NoTau, NotEgorovShape, SingularSystem, ZeroLame
from .ratfun import INF, is_inf, points_coincide

_TINY = 1e-300
_T = TypeVar("_T")
_U = TypeVar("_U")


def parallel_map(fn: Callable[[_T], _U], items: list[_T]) -> list[_U]:
    """Order-preserving map over independent samples."""
    if len(items) < 8:
        return [fn(x) for x in items]
    workers = min(8, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class CoordinateSample:
    u: tuple[complex, ...]
    status: str                      # "solved" | "gap"
    reason: str = ""
    x: tuple[complex, ...] = ()
    jacobian: tuple[tuple[complex, ...], ...] = ()   # [i][k] = d_i x^k
    h2: tuple[complex, ...] = ()
    solution: basolver.BASolution | None = None

    @property
    def solved(self) -> bool:
        return self.status == "solved"


def coordinates(data: SpectralData, u, tol: Tolerances = DEFAULT_TOL,
                solution: basolver.BASolution | None = None) -> CoordinateSample:
    """x^j(u) = psi(u, Q_j) with the Jacobian and metric coefficients."""
    u = tuple(complex(v) for v in u)
    try:
        sol = solution if solution is not None else basolver.solve_coefficients(data, u)
    except SingularSystem as exc:
        return CoordinateSample(u=u, status="gap", reason=str(exc))
    n = data.dimension
    x = []
    jac = [[0j] * n for _ in range(n)]
    for k in range(1, n + 1):
        q = data.q_by_index(k)
        x.append(basolver.eval_psi(data, sol, q.component, q.location, tol))
        for i in range(1, n + 1):
            jac[i - 1][k - 1] = basolver.psi_partial(data, sol, q.component, q.location, (i,), tol)
    h2 = tuple(sum(v * v for v in row) for row in jac)
    return CoordinateSample(u=u, status="solved", x=tuple(x),
                            jacobian=tuple(tuple(r) for r in jac), h2=h2, solution=sol)


def orthogonality_residual(sample: CoordinateSample) -> float:
    """max over i != j of |sum_k d_i x^k d_j x^k|, normalized by max |H_i^2|."""
    if not sample.solved:
        raise SingularSystem(sample.reason)
    n = len(sample.x)
    scale = max((abs(v) for v in sample.h2), default=0.0) + _TINY
    worst = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            dot = sum(sample.jacobian[i][k] * sample.jacobian[j][k] for k in range(n))
            worst = max(worst, abs(dot) / scale)
    return worst


def _u_is_real(u: Iterable[complex], tol: float = 1e-12) -> bool:
    return all(abs(complex(v).imag) <= tol for v in u)


def reality_probe_points(data: SpectralData, seed: int, count: int = 10):
    """Deterministic generic curve points clear of poles and marked points."""
    rng = np.random.default_rng(seed)
    avoid: dict[str, list] = {cid: [] for cid in data.components}
    for g in data.psi_poles:
        avoid[g.component].append(g.location)
    for p in data.essential_points:
        avoid[p.component].append(p.location)
    for nd in data.nodes:
        avoid[nd.p.component].append(nd.p.location)
        avoid[nd.q.component].append(nd.q.location)
    out = []
    cids = itertools.cycle(data.components)
    while len(out) < count:
        cid = next(cids)
        z = complex(rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5))
        if all(is_inf(a) or abs(z - a) > 0.2 for a in avoid[cid]):
            out.append((cid, z))
    return out


def reality_residual(data: SpectralData, u, tol: Tolerances = DEFAULT_TOL,
                     solution: basolver.BASolution | None = None,
                     probes=None, seed: int = 0) -> tuple[float, float]:
    """(normalized max |Im x|, max probe deviation of psi(P) - conj psi(tau P)).

    Raises NoTau without an antiholomorphic involution; complex u is the
    caller's responsibility to screen out (the hypothesis needs real flows).
    """
    if data.tau is None:
        raise NoTau("spectral data declares no antiholomorphic involution")
    sample = coordinates(data, u, tol, solution)
    if not sample.solved:
        raise SingularSystem(sample.reason)
    xscale = 1 + max(abs(v) for v in sample.x)
    im_res = max(abs(v.imag) for v in sample.x) / xscale
    if probes is None:
        probes = reality_probe_points(data, seed)
    probe_res = 0.0
    for cid, z in probes:
        val = basolver.eval_psi(data, sample.solution, cid, z, tol)
        tcid, tz = data.tau.map_point(cid, z)
        mirrored = basolver.eval_psi(data, sample.solution, tcid, tz, tol)
        probe_res = max(probe_res, abs(val - mirrored.conjugate()) / (1 + abs(val)))
    return im_res, probe_res


# ---------------------------------------------------------------------------
# Egorov structure
# ---------------------------------------------------------------------------

def egorov_shape(data: SpectralData, tol: Tolerances = DEFAULT_TOL) -> tuple[bool, str]:
    """Structural hypotheses: P_j = infinity and Q_j = 0 paired on component j,
    and node coordinates equal on both sides."""
    if len(data.components) != data.dimension:
        return False, f"{len(data.components)} components for dimension {data.dimension}"
    for j in range(1, data.dimension + 1):
        p = data.essential_by_flow(j)
        q = data.q_by_index(j)
        if not is_inf(p.location):
            return False, f"P{j} is not at infinity"
        if q.component != p.component:
            return False, f"Q{j} lives on {q.component}, P{j} on {p.component}"
        if is_inf(q.location) or abs(q.location) > tol.tol_pt:
            return False, f"Q{j} is not at 0"
    comps = {data.essential_by_flow(j).component for j in range(1, data.dimension + 1)}
    if len(comps) != data.dimension:
        return False, "flows do not pair bijectively with components"
    for nd in data.nodes:
        if not points_coincide(nd.p.location, nd.q.location, tol.tol_pt):
            return False, (f"node coordinates differ across components: "
                           f"{nd.p.location} vs {nd.q.location}")
    return True, ""


@dataclass(frozen=True)
class EgorovData:
    rho: complex                      # common Q residue of Omega
    eps2: tuple[complex, ...]         # raw expansion coefficients of Omega at P_j
    h: tuple[complex, ...]            # leading expansion coefficients of psi
    beta: tuple[tuple[complex, ...], ...]
    lame_residual: float
    beta_residual: float


def egorov_checks(data: SpectralData, u, tol: Tolerances = DEFAULT_TOL,
                  solution: basolver.BASolution | None = None) -> EgorovData:
    """Lame identity H_j^2 = (eps_j^2 / rho) h_j^2 and rotation symmetry.

    rho is the common Q-residue of Omega: the identity holds with eps^2 read
    off a form normalized to unit Q-residue, so eps^2/rho restores that
    normalization for data declaring Omega with a different overall scale.
    """
    ok, reason = egorov_shape(data, tol)
    if not ok:
        raise NotEgorovShape(reason)
    sample = coordinates(data, u, tol, solution)
    if not sample.solved:
        raise SingularSystem(sample.reason)
    sol = sample.solution
    n = data.dimension
    rho = common_q_residue(data, tol)
    eps2 = []
    for j in range(1, n + 1):
        p = data.essential_by_flow(j)
        eps2.append(data.omega_form(p.component, tol).eps2_at(p.location, tol))
    h = [basolver.eval_h(data, sol, j, tol) for j in range(1, n + 1)]

    h2_scale = max(abs(v) for v in sample.h2) + _TINY
    if min(abs(v) for v in sample.h2) <= 1e-14 * h2_scale:
        raise ZeroLame(f"a Lame coefficient vanishes at u={sample.u}")
    lame = max(abs(sample.h2[j] - (eps2[j] / rho) * h[j] ** 2) for j in range(n)) / h2_scale

    # constant branch of eps: any fixed square root gives the same symmetry
    # verdict because the identity is quadratic in the branches
    eps = [cmath.sqrt(e / rho) for e in eps2]
    beta = [[0j] * n for _ in range(n)]
    worst, bscale = 0.0, 1.0
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if i == j:
                continue
            dh = basolver.h_partial(data, sol, i, j, tol)
            beta[i - 1][j - 1] = eps[j - 1] * dh / (eps[i - 1] * h[i - 1])
            bscale = max(bscale, abs(beta[i - 1][j - 1]))
    for i in range(n):
        for j in range(i + 1, n):
            worst = max(worst, abs(beta[i][j] - beta[j][i]))
    return EgorovData(rho=rho, eps2=tuple(eps2), h=tuple(h),
                      beta=tuple(tuple(r) for r in beta),
                      lame_residual=lame, beta_residual=worst / bscale)


def epd_residual(data: SpectralData, u, i: int, j: int, point,
                 tol: Tolerances = DEFAULT_TOL,
                 solution: basolver.BASolution | None = None) -> float:
    """Residual of d2_ij psi = d_j(log h_i) d_i psi + d_i(log h_j) d_j psi at a
    generic curve point (component id, location)."""
    if i == j:
        raise ValueError("the flow equation is for mixed derivatives, i != j")
    cid, z = point
    sol = solution if solution is not None else basolver.solve_coefficients(data, u)
    h_i = basolver.eval_h(data, sol, i, tol)
    h_j = basolver.eval_h(data, sol, j, tol)
    if min(abs(h_i), abs(h_j)) <= _TINY:
        raise ZeroLame(f"h vanishes at u={sol.u}")
    lhs = basolver.psi_partial(data, sol, cid, z, (i, j), tol)
    t1 = (basolver.h_partial(data, sol, j, i, tol) / h_i) * basolver.psi_partial(
        data, sol, cid, z, (i,), tol)
    t2 = (basolver.h_partial(data, sol, i, j, tol) / h_j) * basolver.psi_partial(
        data, sol, cid, z, (j,), tol)
    scale = max(abs(lhs), abs(t1), abs(t2), 1.0)
    return abs(lhs - t1 - t2) / scale


# ---------------------------------------------------------------------------
# residue instrumentation of the cancellation form
# ---------------------------------------------------------------------------

def node_cancellation_residual(data: SpectralData, u, i: int, j: int,
                               tol: Tolerances = DEFAULT_TOL,
                               solution: basolver.BASolution | None = None
                               ) -> tuple[float, float]:
    """(max per-node residue sum, max per-component total residue sum) of the
    cancellation form, both normalized by the largest individual residue.

    The per-node sum Res_a omega^p + Res_b omega^q carries the gluing weights
    implicitly: the residues themselves contain lambda * lambda_sigma through
    the solved section, so the plain sum is the quantity that vanishes.
    """
    sol = solution if solution is not None else basolver.solve_coefficients(data, u)
    forms = basolver.omega_ij_form(data, sol, i, j, tol)
    mags = [1e-12]
    node_sums = []
    for nd in data.nodes:
        ra = forms[nd.p.component].residue_or_zero(nd.p.location, tol)
        rb = forms[nd.q.component].residue_or_zero(nd.q.location, tol)
        mags += [abs(ra), abs(rb)]
        node_sums.append(ra + rb)
    comp_sums = []
    for cid in data.components:
        form = forms[cid]
        total = form.residue_or_zero(INF, tol)
        for p, _ in form.value.poles:
            r = form.residue_or_zero(p, tol)
            mags.append(abs(r))
            total += r
        comp_sums.append(total)
    scale = max(mags)
    node_res = max((abs(s) for s in node_sums), default=0.0) / scale
    comp_res = max(abs(s) for s in comp_sums) / scale
    return node_res, comp_res


# ---------------------------------------------------------------------------
# report driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    axes: tuple[tuple[float, float, int], ...]

    def __post_init__(self):
        for lo, hi, count in self.axes:
            if not (lo < hi):
                raise ValueError(f"grid axis needs min < max, got {lo}:{hi}")
            if count < 2:
                raise ValueError("grid axis needs count >= 2")

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        axes = []
        for part in text.split(","):
            bits = part.split(":")
            if len(bits) != 3:
                raise ValueError(f"grid axis {part!r} is not min:max:count")
            axes.append((float(bits[0]), float(bits[1]), int(bits[2])))
        return cls(tuple(axes))

    @classmethod
    def default(cls, dimension: int) -> "GridSpec":
        return cls(tuple((-1.0, 1.0, 21) for _ in range(dimension)))

    def axis_values(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, count) for lo, hi, count in self.axes]

    def points(self) -> list[tuple[float, ...]]:
        return [tuple(float(v) for v in pt) for pt in itertools.product(*self.axis_values())]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(count for _, _, count in self.axes)


@dataclass
class CheckAccumulator:
    name: str
    threshold: float
    applicable: bool = True
    detail: str = ""
    max_residual: float = 0.0
    worst_u: tuple[float, ...] | None = None
    n_samples: int = 0
    n_gaps: int = 0

    def record(self, residual: float, u) -> None:
        self.n_samples += 1
        residual = float(residual)
        if residual > self.max_residual:
            self.max_residual = residual
            self.worst_u = tuple(float(complex(v).real) for v in u)

    def gap(self) -> None:
        self.n_gaps += 1

    @property
    def passed(self) -> bool:
        if not self.applicable:
            return True
        return bool(self.n_samples > 0 and self.max_residual <= self.threshold)

    def to_jsonable(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "applicable": self.applicable,
            "detail": self.detail,
            "max_residual": self.max_residual if self.applicable else None,
            "worst_u": list(self.worst_u) if self.worst_u is not None else None,
            "n_samples": self.n_samples,
            "n_gaps": self.n_gaps,
            "threshold": self.threshold,
            "passed": self.passed,
        }


@dataclass
class VerificationReport:
    checks: dict[str, CheckAccumulator] = field(default_factory=dict)
    seed: int = 0
    grid_shape: tuple[int, ...] = ()

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def to_jsonable(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "seed": self.seed,
            "grid_shape": list(self.grid_shape),
            "checks": [c.to_jsonable() for c in self.checks.values()],
        }


def run_report(data: SpectralData, grid: GridSpec | None = None, seed: int = 0,
               tol: Tolerances = DEFAULT_TOL) -> VerificationReport:
    """Evaluate every applicable check over a grid of real flow points."""
    if grid is None:
        grid = GridSpec.default(data.dimension)
    if len(grid.axes) != data.dimension:
        raise ValueError(f"grid has {len(grid.axes)} axes for dimension {data.dimension}")
    n = data.dimension

    report = VerificationReport(seed=seed, grid_shape=grid.shape)
    checks = report.checks
    for name in ("orthogonality", "node_cancellation", "component_residue_sum"):
        checks[name] = CheckAccumulator(name, CHECK_THRESHOLDS[name])
    checks["reality_im"] = CheckAccumulator("reality_im", CHECK_THRESHOLDS["reality_im"],
                                            applicable=data.tau is not None,
                                            detail="" if data.tau else "no tau declared")
    checks["reality_probe"] = CheckAccumulator("reality_probe", CHECK_THRESHOLDS["reality_probe"],
                                               applicable=data.tau is not None,
                                               detail="" if data.tau else "no tau declared")
    shape_ok, shape_reason = egorov_shape(data, tol)
    checks["lame_identity"] = CheckAccumulator("lame_identity", CHECK_THRESHOLDS["lame_identity"],
                                               applicable=shape_ok, detail=shape_reason)
    checks["beta_symmetry"] = CheckAccumulator("beta_symmetry", CHECK_THRESHOLDS["beta_symmetry"],
                                               applicable=shape_ok, detail=shape_reason)
    checks["epd_equation"] = CheckAccumulator("epd_equation", CHECK_THRESHOLDS["epd_equation"],
                                              applicable=n >= 2,
                                              detail="" if n >= 2 else "needs two flows")

    probes = reality_probe_points(data, seed)
    epd_points = probes[: max(2, len(data.components))]
    pairs = [(i, j) for i in range(1, n + 1) for j in range(1, n + 1)]
    GAP = "gap"

    def evaluate_sample(u) -> dict[str, Any]:
        out: dict[str, Any] = {}
        try:
            sol = basolver.solve_coefficients(data, u)
        except SingularSystem:
            return {name: GAP for name, c in checks.items() if c.applicable}
        sample = coordinates(data, u, tol, solution=sol)
        out["orthogonality"] = orthogonality_residual(sample)

        if data.tau is not None and _u_is_real(u):
            im_res, probe_res = reality_residual(data, u, tol, solution=sol, probes=probes)
            out["reality_im"] = im_res
            out["reality_probe"] = probe_res

        if shape_ok:
            try:
                eg = egorov_checks(data, u, tol, solution=sol)
                out["lame_identity"] = eg.lame_residual
                out["beta_symmetry"] = eg.beta_residual
            except ZeroLame:
                out["lame_identity"] = out["beta_symmetry"] = GAP

        if n >= 2:
            try:
                out["epd_equation"] = max(
                    epd_residual(data, u, i, j, pt, tol, solution=sol)
                    for i in range(1, n + 1)
                    for j in range(i + 1, n + 1)
                    for pt in epd_points
                )
            except ZeroLame:
                out["epd_equation"] = GAP

        node_worst, comp_worst = 0.0, 0.0
        for i, j in pairs:
            nr, cr = node_cancellation_residual(data, u, i, j, tol, solution=sol)
            node_worst, comp_worst = max(node_worst, nr), max(comp_worst, cr)
        out["node_cancellation"] = node_worst
        out["component_residue_sum"] = comp_worst
        return out

    points = grid.points()
    for u, result in zip(points, parallel_map(evaluate_sample, points)):
        for name, value in result.items():
            if value == GAP:
                checks[name].gap()
            else:
                checks[name].record(value, u)
    return report
