"""Section solving: assembly, derivatives, expansion coefficients, cancellation form."""
import cmath

import numpy as np
import pytest

from bacurve import basolver
from bacurve.curve import parse_spectral_data
from bacurve.errors import EssentialAtConstraint, EssentialPoint, InvolutionMismatch, SingularSystem
from bacurve.ratfun import INF

from conftest import example_doc, parse_doc, with_lambda
from test_curve import MINIMAL_1D


def solved(data, u):
    return basolver.solve_coefficients(data, u)


class TestAssembly:
    def test_example1_is_3x3(self, example1):
        sys_ = basolver.assemble_system(example1)
        a, rhs = sys_.matrices((0.3, -0.2))
        assert a.shape == (3, 3)
        assert [lbl for lbl, _ in [(k, None) for k in sys_.labels]]  # labels exist
        assert list(rhs) == [0, 0, 1]

    def test_example2_is_4x4(self, example2):
        a, _ = basolver.assemble_system(example2).matrices((0.1, 0.4))
        assert a.shape == (4, 4)

    def test_minimal_instance_closed_form(self):
        data = parse_doc(MINIMAL_1D)
        for u1 in (0.0, 0.7, -1.3):
            sol = solved(data, (u1,))
            # single normalization row: c = d * exp(-u1 * r) with r = 2
            assert sol.coeffs[0] == pytest.approx(cmath.exp(-2 * u1))

    def test_duplicate_node_rows_singular(self):
        doc = example_doc("example1")
        doc["nodes"][1] = dict(doc["nodes"][0])
        data = parse_doc(doc)
        with pytest.raises(SingularSystem):
            solved(data, (0.1, 0.2))

    def test_constraint_at_essential_point_rejected(self):
        doc = example_doc("example1")
        doc["normalization"][0]["location"] = [0, 0]  # P2 sits there
        data = parse_doc(doc)
        with pytest.raises(EssentialAtConstraint):
            basolver.assemble_system(data)

    def test_constraint_roundtrip(self, example2):
        rng = np.random.default_rng(2)
        sys_ = basolver.assemble_system(example2)
        for _ in range(5):
            u = tuple(rng.uniform(-1, 1, 2))
            sol = solved(example2, u)
            a, rhs = sys_.matrices(u)
            err = np.max(np.abs(a @ sol.coeffs - rhs))
            assert err <= 1e-9 * (1 + np.max(np.abs(sol.coeffs)))


class TestSolve:
    def test_example1_origin(self, example1):
        sol = solved(example1, (0.0, 0.0))
        by_label = dict(zip(sol.labels, sol.coeffs))
        assert by_label[("Gamma1", "const")] == pytest.approx(1.0)  # f
        assert by_label[("Gamma2", "const")] == pytest.approx(1.0)  # g
        assert by_label[("Gamma2", 1 + 0j)] == pytest.approx(0.0, abs=1e-14)  # h

    def test_example1_f_closed_form(self, example1):
        # f(u) = d exp(-r u1 - u2 / r) with d = r = 1
        for u in ((1.0, 0.0), (0.3, -0.8)):
            sol = solved(example1, u)
            f = dict(zip(sol.labels, sol.coeffs))[("Gamma1", "const")]
            assert f == pytest.approx(cmath.exp(-u[0] - u[1]))

    def test_linearity_in_d(self):
        # the solution map is linear in the normalization values
        doc1 = example_doc("example1")
        doc2 = example_doc("example1")
        doc2["normalization"][0]["d"] = [0.3, 0.7]
        doc3 = example_doc("example1")
        doc3["normalization"][0]["d"] = [1.3, 0.7]
        u = (0.4, -0.6)
        sols = [solved(parse_doc(d), u).coeffs for d in (doc1, doc2, doc3)]
        assert np.max(np.abs(sols[0] + sols[1] - sols[2])) <= 1e-10 * (1 + np.max(np.abs(sols[2])))

    def test_rcond_recorded(self, example3):
        sol = solved(example3, (0.2, 0.1))
        assert 1e-10 < sol.rcond <= 1.0


class TestEvalPsi:
    def test_example1_coordinates_unit_lambda(self, example1):
        sol = solved(example1, (0.0, 0.0))
        assert basolver.eval_psi(example1, sol, "Gamma2", INF) == pytest.approx(1.0)
        assert basolver.eval_psi(example1, sol, "Gamma2", 0j) == pytest.approx(1.0)

    def test_example1_coordinates_generic_lambda(self):
        data = parse_doc(with_lambda("example1", 1 + 2j)).bind_parameters({"s": 0.8})
        sol = solved(data, (0.0, 0.0))
        x = basolver.eval_psi(data, sol, "Gamma2", 0j)
        y = basolver.eval_psi(data, sol, "Gamma2", INF)
        assert x == pytest.approx(-1 / 5)
        assert y == pytest.approx(3 / 5)

    def test_gluing_roundtrip(self, example1):
        sol = solved(example1, (0.0, 0.0))
        nd = example1.nodes[0]
        lhs = basolver.eval_psi(example1, sol, nd.p.component, nd.p.location)
        rhs = basolver.eval_psi(example1, sol, nd.q.component, nd.q.location)
        assert lhs - nd.lam * rhs == pytest.approx(0.0, abs=1e-12)

    def test_essential_point_redirects(self, example1):
        sol = solved(example1, (0.1, 0.2))
        with pytest.raises(EssentialPoint):
            basolver.eval_psi(example1, sol, "Gamma1", INF)


class TestEvalH:
    def test_example3_h1_is_rational_constant(self, example3):
        sol = solved(example3, (0.25, -0.45))
        f = dict(zip(sol.labels, sol.coeffs))[("Gamma1", "const")]
        assert basolver.eval_h(example3, sol, 1) == pytest.approx(f)

    def test_example1_h_both_equal_f(self, example1):
        # the u2 exponential tends to 1 at P1 and the u1 one at P2
        sol = solved(example1, (0.6, 0.3))
        f = dict(zip(sol.labels, sol.coeffs))[("Gamma1", "const")]
        assert basolver.eval_h(example1, sol, 1) == pytest.approx(f)
        assert basolver.eval_h(example1, sol, 2) == pytest.approx(f)

    @pytest.mark.parametrize("j,seq", [(1, [1e3, 1e4, 1e6]), (2, [1e-3, 1e-4, 1e-6])])
    def test_h_matches_limit_of_psi(self, example1, j, seq):
        # eval_h against the limit of psi * exp(-u^j k_j) along z -> P_j,
        # rebuilt here from the raw exponent sum and the solved constants
        u = (0.2, -0.7)
        sol = solved(example1, u)
        want = basolver.eval_h(example1, sol, j)
        by_label = dict(zip(sol.labels, sol.coeffs))
        errs = []
        for t in seq:
            z = complex(t)
            exponent = -u[j - 1] * example1.essential_by_flow(j).k_value(z)
            for p in example1.essential_on("Gamma1"):
                exponent += u[p.flow_index - 1] * p.k_value(z)
            val = cmath.exp(exponent) * by_label[("Gamma1", "const")]
            errs.append(abs(val - want) / (1 + abs(want)))
        assert errs[-1] <= 1e-6
        assert errs[-1] <= errs[0]


class TestPartials:
    def test_zeroth_order_matches_eval(self, example3):
        sol = solved(example3, (0.3, 0.4))
        for cid, z in (("Gamma1", 0.5 + 0.1j), ("Gamma2", -0.7j)):
            assert basolver.psi_partial(example3, sol, cid, z, ()) == pytest.approx(
                basolver.eval_psi(example3, sol, cid, z))

    def test_example1_jacobian_origin(self, example1):
        sol = solved(example1, (0.0, 0.0))
        q1, q2 = 0j, INF
        grid = {
            (1, q1): 0.0, (2, q1): -2.0,
            (1, q2): -2.0, (2, q2): 0.0,
        }
        for (i, z), want in grid.items():
            got = basolver.psi_partial(example1, sol, "Gamma2", z, (i,))
            assert got == pytest.approx(want, abs=1e-12)

    @pytest.mark.parametrize("name", ["example1", "example2", "example3"])
    def test_analytic_vs_fd_first(self, name, request):
        data = request.getfixturevalue(name)
        rng = np.random.default_rng(9)
        for _ in range(6):
            u = tuple(rng.uniform(-1, 1, 2))
            sol = solved(data, u)
            cid = data.components[int(rng.integers(0, 2))]
            z = complex(rng.uniform(-2, 2), rng.uniform(0.5, 2))
            i = int(rng.integers(1, 3))
            an = basolver.psi_partial(data, sol, cid, z, (i,))
            fd = basolver.psi_partial_fd(data, u, cid, z, (i,))
            assert abs(an - fd) <= 1e-7 * (1 + abs(an))

    def test_analytic_vs_fd_second(self, example3):
        u = (0.15, -0.35)
        sol = solved(example3, u)
        z = 0.9 + 0.4j
        an = basolver.psi_partial(example3, sol, "Gamma2", z, (1, 2))
        fd = basolver.psi_partial_fd(example3, u, "Gamma2", z, (1, 2))
        assert abs(an - fd) <= 1e-5 * (1 + abs(an))


class TestOmegaIJ:
    @pytest.mark.parametrize("name", ["example1", "example2", "example3"])
    def test_matches_pointwise_product(self, name, request):
        # the exact form equals the numeric product of derivative values and
        # the Omega coefficient at generic points: the exponentials cancel
        data = request.getfixturevalue(name)
        rng = np.random.default_rng(21)
        u = tuple(rng.uniform(-1, 1, 2))
        sol = solved(data, u)
        for i, j in ((1, 1), (1, 2), (2, 1), (2, 2)):
            forms = basolver.omega_ij_form(data, sol, i, j)
            for cid in data.components:
                target = data.sigma.component_map[cid]
                mob = data.sigma.mobius[cid]
                omega_val = data.omega_form(cid).value
                count = 0
                while count < 20:
                    z = complex(rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5))
                    try:
                        want = (basolver.psi_partial(data, sol, cid, z, (i,))
                                * basolver.psi_partial(data, sol, target, mob(z), (j,))
                                * omega_val(z))
                        got = forms[cid].value(z)
                    except Exception:
                        continue
                    count += 1
                    assert abs(got - want) <= 1e-8 * (1 + abs(want))

    def test_node_cancellation_pairs(self, example1):
        rng = np.random.default_rng(4)
        for _ in range(3):
            u = tuple(rng.uniform(-1, 1, 2))
            sol = solved(example1, u)
            forms = basolver.omega_ij_form(example1, sol, 1, 2)
            for nd in example1.nodes:
                ra = forms[nd.p.component].residue_or_zero(nd.p.location)
                rb = forms[nd.q.component].residue_or_zero(nd.q.location)
                assert abs(ra + rb) <= 1e-10 * (1 + abs(ra) + abs(rb))

    def test_regular_at_double_normalization_poles(self, example2):
        # Omega has double poles at +-r = +-i/2; the derivative factors vanish
        # there because psi(+-r) is pinned to 1
        sol = solved(example2, (0.37, -0.21))
        for i, j in ((1, 1), (1, 2), (2, 2)):
            forms = basolver.omega_ij_form(example2, sol, i, j)
            for loc in (0.5j, -0.5j):
                res = forms["Gamma1"].residue_or_zero(loc)
                assert abs(res) <= 1e-8

    def test_component_swap_with_essentials_rejected(self):
        # sigma exchanging components that carry essential points cannot
        # cancel the exponentials; the construction must refuse structurally
        doc = example_doc("example3")
        doc["sigma"]["component_map"] = {"Gamma1": "Gamma2", "Gamma2": "Gamma1"}
        data = parse_doc(doc)
        sol = basolver.solve_coefficients(data, (0.1, 0.3))
        with pytest.raises(InvolutionMismatch):
            basolver.omega_ij_form(data, sol, 1, 2)

    def test_q_residue_sum_is_orthogonality(self, example3):
        # sum over Q of residues equals common-rho times the jacobian dot
        from bacurve.verify import coordinates

        u = (0.3, 0.55)
        sample = coordinates(example3, u)
        sol = sample.solution
        forms = basolver.omega_ij_form(example3, sol, 1, 2)
        total = 0j
        for k in (1, 2):
            q = example3.q_by_index(k)
            total += forms[q.component].residue_or_zero(q.location)
        dot = sum(sample.jacobian[0][k] * sample.jacobian[1][k] for k in range(2))
        assert total == pytest.approx(-dot / 9, abs=1e-12)  # rho = -1/9
