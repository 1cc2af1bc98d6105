"""Global numeric tolerances.

All equality of points and all pass/fail verdicts are controlled by the two
knobs below; they can be overridden per call or from the CLI, never mutated
globally.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    # two points coincide when |p - q| <= tol_pt
    tol_pt: float = 1e-9
    # residual checks (residue cancellation, validation zeros)
    tol_res: float = 1e-10

    def replaced(self, tol_pt: float | None = None, tol_res: float | None = None) -> "Tolerances":
        return Tolerances(
            tol_pt=self.tol_pt if tol_pt is None else tol_pt,
            tol_res=self.tol_res if tol_res is None else tol_res,
        )


DEFAULT_TOL = Tolerances()

# verdict thresholds used by verification reports, keyed by check name
CHECK_THRESHOLDS = {
    "orthogonality": 1e-8,
    "reality_im": 1e-8,
    "reality_probe": 1e-9,
    "lame_identity": 1e-8,
    "beta_symmetry": 1e-8,
    "epd_equation": 1e-6,
    "node_cancellation": 1e-10,
    "component_residue_sum": 1e-10,
}
