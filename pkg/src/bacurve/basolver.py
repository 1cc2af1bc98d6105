"""Solving the Baker-Akhiezer section at a fixed flow point.

The section on each component is E_c(u, z) * (A_c + sum_k B_ck / (z - g_k)),
with one exponential factor per essential point of the component.  Gluing and
normalization conditions give a square linear system in the constants A, B;
u-derivatives of the section come from differentiating that system, never
from symbolic formulas.  The cancellation form built in ``omega_ij_form`` kills
the exponentials structurally and is returned as an exact rational 1-form.
"""
from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_TOL, Tolerances
from .curve import SpectralData
from .errors import (
    EssentialAtConstraint,
    EssentialPoint,
    InvolutionMismatch,
    PoleEvaluation,
    SingularSystem,
)
from .ratfun import RationalFunction, RationalOneForm, SpherePoint, is_inf, points_coincide

RCOND_FLOOR = 1e-10
RESIDUAL_BOUND = 1e-9


@dataclass(frozen=True)
class _RowTerm:
    """One evaluation point of a constraint row.

    ``kappa[i]`` is the value of the local parameter k_{i+1} at the point when
    flow i+1 lives on this component, else 0; differentiating the row in u^i
    multiplies the term by kappa[i].
    """
    component: str
    point: SpherePoint
    base_coeff: complex          # u-independent factor (1 or -lambda)
    kappa: tuple[complex, ...]   # per flow variable
    basis: tuple[complex, ...]   # rational-factor basis evaluated at the point


@dataclass(frozen=True)
class LinearSystem:
    labels: tuple[tuple[str, str | complex], ...]
    rows: tuple[tuple[_RowTerm, ...], ...]
    rhs: tuple[complex, ...]

    def matrices(self, u) -> tuple[np.ndarray, np.ndarray]:
        m = len(self.rows)
        a = np.zeros((m, m), dtype=complex)
        for r, terms in enumerate(self.rows):
            for t in terms:
                e = cmath.exp(sum(k * complex(uv) for k, uv in zip(t.kappa, u)))
                a[r] += t.base_coeff * e * np.asarray(t.basis)
        return a, np.asarray(self.rhs, dtype=complex)

    def derivative_matrix(self, u, flows: tuple[int, ...]) -> np.ndarray:
        """Matrix of the row-wise derivative in the given flow variables."""
        m = len(self.rows)
        a = np.zeros((m, m), dtype=complex)
        for r, terms in enumerate(self.rows):
            for t in terms:
                w = 1.0 + 0j
                for i in flows:
                    w *= t.kappa[i]
                if w == 0:
                    continue
                e = cmath.exp(sum(k * complex(uv) for k, uv in zip(t.kappa, u)))
                a[r] += w * t.base_coeff * e * np.asarray(t.basis)
        return a


@dataclass(frozen=True)
class BASolution:
    u: tuple[complex, ...]
    labels: tuple[tuple[str, str | complex], ...]
    coeffs: np.ndarray                 # solved constants
    first: np.ndarray                  # first[i] = d/du^{i+1} of coeffs
    second: np.ndarray                 # second[i, j] = mixed second derivative
    rcond: float
    residual: float

    def slice_for(self, component: str) -> list[int]:
        return [k for k, (cid, _) in enumerate(self.labels) if cid == component]


def _kappa_at(data: SpectralData, component: str, z: SpherePoint) -> tuple[complex, ...]:
    out = []
    for i in range(1, data.dimension + 1):
        p = data.essential_by_flow(i)
        if p.component != component:
            out.append(0j)
            continue
        if points_coincide(z, p.location):
            raise EssentialAtConstraint(
                f"constraint point {z} sits at essential point P{i} on {component}")
        out.append(p.k_value(z))
    return tuple(out)


def _basis_at(data: SpectralData, component: str, z: SpherePoint) -> tuple[complex, ...]:
    """Rational-factor basis (1 and 1/(z - g)) against the global unknown order."""
    out = []
    for cid, kind in data.unknown_labels():
        if cid != component:
            out.append(0j)
        elif kind == "const":
            out.append(1.0 + 0j)
        elif is_inf(z):
            out.append(0j)
        else:
            out.append(1.0 / (complex(z) - kind))
    return tuple(out)


def assemble_system(data: SpectralData) -> LinearSystem:
    """One row per node plus one per normalization point; square by counting.

    The returned rows are u-independent; ``LinearSystem.matrices(u)`` fills in
    the exponential factors at a concrete flow point.
    """
    labels = data.unknown_labels()
    rows: list[tuple[_RowTerm, ...]] = []
    rhs: list[complex] = []
    for nd in data.nodes:
        rows.append((
            _RowTerm(nd.p.component, nd.p.location, 1.0,
                     _kappa_at(data, nd.p.component, nd.p.location),
                     _basis_at(data, nd.p.component, nd.p.location)),
            _RowTerm(nd.q.component, nd.q.location, -nd.lam,
                     _kappa_at(data, nd.q.component, nd.q.location),
                     _basis_at(data, nd.q.component, nd.q.location)),
        ))
        rhs.append(0j)
    for r in data.normalization:
        rows.append((
            _RowTerm(r.component, r.location, 1.0,
                     _kappa_at(data, r.component, r.location),
                     _basis_at(data, r.component, r.location)),
        ))
        rhs.append(r.d)
    return LinearSystem(labels=labels, rows=tuple(rows), rhs=tuple(rhs))


def solve_coefficients(data: SpectralData, u, system: LinearSystem | None = None) -> BASolution:
    """Solve for the section constants and their u-derivatives at a flow point.

    First derivatives satisfy A dc = -(dA) c and mixed seconds
    A d2c = -(d2A) c - (dA_i)(dc_j) - (dA_j)(dc_i); the right-hand sides are
    u-independent so only the system matrix is differentiated.
    """
    u = tuple(complex(v) for v in u)
    if len(u) != data.dimension:
        raise ValueError(f"flow point has length {len(u)}, expected {data.dimension}")
    sys_ = system if system is not None else assemble_system(data)
    a, rhs = sys_.matrices(u)
    m = a.shape[0]
    if a.shape != (m, m) or m != len(sys_.labels):
        raise SingularSystem(f"system is {a.shape} for {len(sys_.labels)} unknowns")
    svals = np.linalg.svd(a, compute_uv=False)
    rcond = float(svals[-1] / svals[0]) if svals[0] > 0 else 0.0
    if rcond < RCOND_FLOOR:
        raise SingularSystem(f"reciprocal condition {rcond:.3e} at u={u}")
    coeffs = np.linalg.solve(a, rhs)
    residual = float(np.max(np.abs(a @ coeffs - rhs)))
    if residual > RESIDUAL_BOUND * (1 + float(np.max(np.abs(coeffs)))):
        raise SingularSystem(f"back-substitution residual {residual:.3e} at u={u}")

    n = data.dimension
    da = [sys_.derivative_matrix(u, (i,)) for i in range(n)]
    first = np.stack([np.linalg.solve(a, -da[i] @ coeffs) for i in range(n)])
    second = np.zeros((n, n, m), dtype=complex)
    for i in range(n):
        for j in range(i, n):
            d2 = sys_.derivative_matrix(u, (i, j))
            rhs2 = -(d2 @ coeffs) - da[i] @ first[j] - da[j] @ first[i]
            second[i, j] = second[j, i] = np.linalg.solve(a, rhs2)
    return BASolution(u=u, labels=sys_.labels, coeffs=coeffs, first=first,
                      second=second, rcond=rcond, residual=residual)


def _rational_factor_value(data: SpectralData, sol_vec, component: str, z: SpherePoint,
                           labels, tol: Tolerances) -> complex:
    acc = 0j
    for k, (cid, kind) in enumerate(labels):
        if cid != component:
            continue
        if kind == "const":
            acc += sol_vec[k]
        elif is_inf(z):
            continue
        else:
            if abs(complex(z) - kind) <= tol.tol_pt:
                raise PoleEvaluation(f"evaluation at psi pole {kind} on {component}")
            acc += sol_vec[k] / (complex(z) - kind)
    return acc


def exponential_factor(data: SpectralData, component: str, u, z: SpherePoint) -> complex:
    acc = 0j
    for p in data.essential_on(component):
        if points_coincide(z, p.location):
            raise EssentialPoint(
                f"psi has an essential singularity at P{p.flow_index}; use eval_h")
        acc += complex(u[p.flow_index - 1]) * p.k_value(z)
    return cmath.exp(acc)


def eval_psi(data: SpectralData, sol: BASolution, component: str, z: SpherePoint,
             tol: Tolerances = DEFAULT_TOL) -> complex:
    e = exponential_factor(data, component, sol.u, z)
    return e * _rational_factor_value(data, sol.coeffs, component, z, sol.labels, tol)


def psi_partial(data: SpectralData, sol: BASolution, component: str, z: SpherePoint,
                alpha: tuple[int, ...] = (), tol: Tolerances = DEFAULT_TOL) -> complex:
    """Analytic u-derivative of psi at a curve point; alpha lists 1-based flow
    indices, at most two of them."""
    if len(alpha) > 2:
        raise ValueError("derivatives of order > 2 not supported")
    e = exponential_factor(data, component, sol.u, z)
    kappa = _kappa_at(data, component, z)
    r0 = _rational_factor_value(data, sol.coeffs, component, z, sol.labels, tol)
    if not alpha:
        return e * r0
    if len(alpha) == 1:
        i = alpha[0] - 1
        ri = _rational_factor_value(data, sol.first[i], component, z, sol.labels, tol)
        return e * (kappa[i] * r0 + ri)
    i, j = alpha[0] - 1, alpha[1] - 1
    ri = _rational_factor_value(data, sol.first[i], component, z, sol.labels, tol)
    rj = _rational_factor_value(data, sol.first[j], component, z, sol.labels, tol)
    rij = _rational_factor_value(data, sol.second[i, j], component, z, sol.labels, tol)
    return e * (kappa[i] * kappa[j] * r0 + kappa[i] * rj + kappa[j] * ri + rij)


def psi_partial_fd(data: SpectralData, u, component: str, z: SpherePoint,
                   alpha: tuple[int, ...], tol: Tolerances = DEFAULT_TOL) -> complex:
    """Finite-difference counterpart of psi_partial (central stencils)."""
    u = tuple(complex(v) for v in u)
    h = 1e-5 * max(1.0, max(abs(v) for v in u))

    def value(point) -> complex:
        sol = solve_coefficients(data, point)
        return eval_psi(data, sol, component, z, tol)

    def shifted(*pairs) -> tuple[complex, ...]:
        out = list(u)
        for idx, step in pairs:
            out[idx] += step
        return tuple(out)

    if len(alpha) == 1:
        i = alpha[0] - 1
        return (value(shifted((i, h))) - value(shifted((i, -h)))) / (2 * h)
    if len(alpha) == 2:
        i, j = alpha[0] - 1, alpha[1] - 1
        if i == j:
            return (value(shifted((i, h))) - 2 * value(u) + value(shifted((i, -h)))) / h**2
        return (value(shifted((i, h), (j, h))) - value(shifted((i, h), (j, -h)))
                - value(shifted((i, -h), (j, h))) + value(shifted((i, -h), (j, -h)))) / (4 * h**2)
    return value(u)


def eval_h(data: SpectralData, sol: BASolution, j: int, tol: Tolerances = DEFAULT_TOL) -> complex:
    """Leading expansion coefficient h_j(u) of psi at the essential point P_j.

    This is the limit of psi * exp(-u^j k_j), i.e. the product of the other
    exponential factors of the component with the rational factor, both
    evaluated at P_j.
    """
    p = data.essential_by_flow(j)
    acc = 0j
    for q in data.essential_on(p.component):
        if q.flow_index == j:
            continue
        acc += complex(sol.u[q.flow_index - 1]) * q.k_value(p.location)
    r0 = _rational_factor_value(data, sol.coeffs, p.component, p.location, sol.labels, tol)
    return cmath.exp(acc) * r0


def h_partial(data: SpectralData, sol: BASolution, i: int, j: int,
              tol: Tolerances = DEFAULT_TOL) -> complex:
    """Analytic derivative of h_j in u^i (both 1-based)."""
    p = data.essential_by_flow(j)
    acc = 0j
    kappa_i = 0j
    for q in data.essential_on(p.component):
        if q.flow_index == j:
            continue
        acc += complex(sol.u[q.flow_index - 1]) * q.k_value(p.location)
        if q.flow_index == i:
            kappa_i = q.k_value(p.location)
    e = cmath.exp(acc)
    r0 = _rational_factor_value(data, sol.coeffs, p.component, p.location, sol.labels, tol)
    ri = _rational_factor_value(data, sol.first[i - 1], p.component, p.location, sol.labels, tol)
    return e * (kappa_i * r0 + ri)


# ---------------------------------------------------------------------------
# the cancellation form omega_ij
# ---------------------------------------------------------------------------

def _k_rational(data: SpectralData, component: str, flow: int) -> RationalFunction | None:
    """k_flow as a rational function on the component, None when absent."""
    p = data.essential_by_flow(flow)
    if p.component != component:
        return None
    if is_inf(p.location):
        return RationalFunction((0, 1))
    return RationalFunction((1,), [(p.location, 1)])


def _rational_factor_fn(data: SpectralData, component: str, vec, labels) -> RationalFunction:
    acc = RationalFunction((0,))
    for k, (cid, kind) in enumerate(labels):
        if cid != component:
            continue
        if kind == "const":
            acc = acc + RationalFunction((vec[k],))
        else:
            acc = acc + RationalFunction((vec[k],), [(kind, 1)])
    return acc


def _derivative_factor(data: SpectralData, sol: BASolution, component: str, i: int) -> RationalFunction:
    """The exponential-free part of d/du^i psi on a component:
    k_i(z) * r(z; c) + r(z; dc_i)."""
    out = _rational_factor_fn(data, component, sol.first[i - 1], sol.labels)
    k = _k_rational(data, component, i)
    if k is not None:
        out = out + k * _rational_factor_fn(data, component, sol.coeffs, sol.labels)
    return out


def omega_ij_form(data: SpectralData, sol: BASolution, i: int, j: int,
                  tol: Tolerances = DEFAULT_TOL) -> dict[str, RationalOneForm]:
    """Per component, the exact rational 1-form
    d_i psi(z) * d_j psi(sigma(z)) * Omega(z).

    The exponentials of the two derivative factors cancel identically because
    sigma fixes every essential point and negates its local parameter; the
    construction therefore never materializes an exponential.  Components
    carrying essential points must be sigma-stable for this to hold.
    """
    out: dict[str, RationalOneForm] = {}
    for cid in data.components:
        target = data.sigma.component_map[cid]
        if data.essential_on(cid) and target != cid:
            raise InvolutionMismatch(
                f"component {cid} carries essential points but sigma sends it to {target}")
        left = _derivative_factor(data, sol, cid, i)
        right = _derivative_factor(data, sol, target, j).compose_mobius(data.sigma.mobius[cid])
        omega = data.omega_form(cid, tol)
        out[cid] = omega.mul_function(left * right)
    return out
