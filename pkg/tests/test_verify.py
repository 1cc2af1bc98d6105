"""Coordinates, identity residuals and the report driver."""
import json

import numpy as np
import pytest

from bacurve import verify
from bacurve.errors import NoTau, NotEgorovShape
from bacurve.verify import GridSpec

from conftest import example_doc, parse_doc, with_lambda
from oracles import Oracle


class TestCoordinates:
    def test_example1_origin(self, example1):
        s = verify.coordinates(example1, (0.0, 0.0))
        assert s.solved
        assert s.x[0] == pytest.approx(1.0)
        assert s.x[1] == pytest.approx(1.0)
        assert np.allclose(np.array(s.jacobian, dtype=complex),
                           np.array([[0, -2], [-2, 0]], dtype=complex), atol=1e-12)
        assert s.h2[0] == pytest.approx(4.0)
        assert s.h2[1] == pytest.approx(4.0)

    def test_example3_origin(self, example3):
        s = verify.coordinates(example3, (0.0, 0.0))
        assert s.x[0] == pytest.approx(4 / 3)
        assert s.x[1] == pytest.approx(2 / 3)
        assert s.h2[0] == pytest.approx(16 / 9)
        assert s.h2[1] == pytest.approx(64 / 9)

    @pytest.mark.parametrize("lam", [1 + 0j, 1 + 2j])
    def test_example1_matches_oracle(self, lam):
        from bacurve.curve import solve_scale_parameter

        data, = [parse_doc(with_lambda("example1", lam))]
        _, data = solve_scale_parameter(data)
        oracle = Oracle("example1")
        rng = np.random.default_rng(13)
        for _ in range(25):
            u1, u2 = rng.uniform(-1, 1, 2)
            want = oracle.coordinates(u1=u1, u2=u2, l1=lam.real, l2=lam.imag)
            s = verify.coordinates(data, (u1, u2))
            for got, exp in zip(s.x, want):
                assert abs(got - exp) <= 1e-9 * (1 + abs(exp))

    def test_example3_matches_oracle(self, example3):
        oracle = Oracle("example3")
        rng = np.random.default_rng(14)
        for _ in range(25):
            u1, u2 = rng.uniform(-1, 1, 2)
            want = oracle.coordinates(u1=u1, u2=u2, lam=1.0)
            wantH = oracle.metric(u1=u1, u2=u2, lam=1.0)
            s = verify.coordinates(example3, (u1, u2))
            for got, exp in zip(s.x, want):
                assert abs(got - exp) <= 1e-9 * (1 + abs(exp))
            for got, exp in zip(s.h2, wantH):
                assert abs(got - exp) <= 1e-8 * (1 + abs(exp))


class TestOrthogonality:
    @pytest.mark.parametrize("name", ["example1", "example2", "example3"])
    def test_random_points(self, name, request):
        data = request.getfixturevalue(name)
        rng = np.random.default_rng(3)
        for _ in range(20):
            s = verify.coordinates(data, tuple(rng.uniform(-1, 1, 2)))
            assert verify.orthogonality_residual(s) < 1e-8

    def test_negative_control_corrupted_lambda(self):
        # lambda + 0.1 without re-solving s: the third example is sensitive
        # (the first two are orthogonal identically in the gluing constants,
        # their coordinates being symmetric combinations of one section)
        doc = example_doc("example3")
        doc["nodes"][0]["lambda"] = [1.1, 0]
        s = verify.coordinates(parse_doc(doc), (0.3, 0.7))
        assert verify.orthogonality_residual(s) > 1e-4

    def test_negative_control_perturbed_scale(self):
        # Omega's scale never enters the section solve, so a 10 percent
        # perturbation of s must surface in the residue instrumentation
        doc = example_doc("example1")
        doc["parameters"]["s"] = [4.4, 0]
        data = parse_doc(doc)
        s = verify.coordinates(data, (0.3, 0.7))
        assert verify.orthogonality_residual(s) < 1e-12
        node_res, _ = verify.node_cancellation_residual(data, (0.3, 0.7), 1, 2)
        assert node_res > 1e-4


class TestReality:
    def test_example1_real(self, example1):
        im_res, probe_res = verify.reality_residual(example1, (0.4, -0.3), seed=0)
        assert im_res < 1e-10
        assert probe_res < 1e-9

    def test_no_tau(self):
        doc = example_doc("example1")
        del doc["tau"]
        with pytest.raises(NoTau):
            verify.reality_residual(parse_doc(doc), (0.1, 0.1))

    def test_complex_data_not_real(self):
        # breaking conj(lambda) = lambda_tau must surface in the residual
        doc = example_doc("example1")
        doc["nodes"][0]["lambda"] = [1, 2]
        doc["nodes"][1]["lambda"] = [1, 2]
        data = parse_doc(doc)
        im_res, _ = verify.reality_residual(data, (0.3, 0.6), seed=0)
        assert im_res > 1e-4


class TestEgorov:
    def test_example3_values(self, example3):
        eg = verify.egorov_checks(example3, (0.0, 0.0))
        assert eg.rho == pytest.approx(-1 / 9)
        assert eg.eps2[0] == pytest.approx(-1 / 9)
        assert eg.eps2[1] == pytest.approx(-1.0)
        assert eg.lame_residual < 1e-8
        assert eg.beta_residual < 1e-8

    def test_example3_over_random_points(self, example3):
        rng = np.random.default_rng(8)
        for _ in range(20):
            eg = verify.egorov_checks(example3, tuple(rng.uniform(-1, 1, 2)))
            assert eg.lame_residual < 1e-8
            assert eg.beta_residual < 1e-8

    def test_example1_not_egorov(self, example1):
        with pytest.raises(NotEgorovShape):
            verify.egorov_checks(example1, (0.0, 0.0))

    def test_shape_requires_equal_node_coordinates(self):
        doc = example_doc("example3")
        doc["nodes"][0]["q"]["location"] = [0.5, 0]
        doc["omega"]["Gamma2"]["poles"][1]["location"] = [0.5, 0]
        ok, reason = verify.egorov_shape(parse_doc(doc))
        assert not ok and "coordinates differ" in reason


class TestEpd:
    @pytest.mark.parametrize("name", ["example1", "example3"])
    def test_random_points(self, name, request):
        data = request.getfixturevalue(name)
        rng = np.random.default_rng(15)
        probes = verify.reality_probe_points(data, 5)
        for _ in range(10):
            u = tuple(rng.uniform(-1, 1, 2))
            pt = probes[int(rng.integers(0, len(probes)))]
            assert verify.epd_residual(data, u, 1, 2, pt) < 1e-6

    def test_at_q_point(self, example1):
        q = example1.q_by_index(1)
        res = verify.epd_residual(example1, (0.2, 0.5), 1, 2, (q.component, q.location))
        assert res < 1e-6

    def test_rejects_equal_indices(self, example1):
        with pytest.raises(ValueError):
            verify.epd_residual(example1, (0.1, 0.1), 1, 1, ("Gamma2", 3.0 + 0j))


class TestNodeCancellation:
    @pytest.mark.parametrize("name", ["example1", "example2", "example3"])
    def test_random_points(self, name, request):
        data = request.getfixturevalue(name)
        rng = np.random.default_rng(31)
        for _ in range(5):
            u = tuple(rng.uniform(-1, 1, 2))
            for i in (1, 2):
                for j in (1, 2):
                    node_res, comp_res = verify.node_cancellation_residual(data, u, i, j)
                    assert node_res < 1e-10
                    assert comp_res < 1e-10

    def test_negative_control_corrupted_lambda(self):
        doc = example_doc("example1")
        doc["nodes"][1]["lambda"] = [1.4, 0]  # breaks the sigma pairing weight
        data = parse_doc(doc)
        node_res, _ = verify.node_cancellation_residual(data, (0.3, 0.7), 1, 2)
        assert node_res > 1e-6


class TestGridSpec:
    def test_parse(self):
        spec = GridSpec.parse("-1:1:21,0:2:5")
        assert spec.axes == ((-1.0, 1.0, 21), (0.0, 2.0, 5))
        assert spec.shape == (21, 5)
        assert len(spec.points()) == 105

    def test_rejects_bad_axis(self):
        with pytest.raises(ValueError):
            GridSpec.parse("1:0:5")
        with pytest.raises(ValueError):
            GridSpec.parse("0:1")


class TestRunReport:
    def test_example1_report(self, example1):
        rep = verify.run_report(example1, GridSpec.parse("-1:1:5,-1:1:5"), seed=0)
        names = set(rep.checks)
        assert {"orthogonality", "reality_im", "reality_probe", "epd_equation",
                "node_cancellation", "component_residue_sum",
                "lame_identity", "beta_symmetry"} == names
        assert rep.passed
        assert not rep.checks["lame_identity"].applicable
        assert rep.checks["orthogonality"].n_samples == 25

    def test_example3_has_egorov_entries(self, example3):
        rep = verify.run_report(example3, GridSpec.parse("-1:1:4,-1:1:4"), seed=0)
        assert rep.checks["lame_identity"].applicable
        assert rep.checks["beta_symmetry"].applicable
        assert rep.passed
        assert rep.checks["orthogonality"].n_gaps == 0

    def test_report_deterministic(self, example3):
        grid = GridSpec.parse("-1:1:3,-1:1:3")
        a = json.dumps(verify.run_report(example3, grid, seed=7).to_jsonable(), sort_keys=True)
        b = json.dumps(verify.run_report(example3, grid, seed=7).to_jsonable(), sort_keys=True)
        assert a == b

    def test_corrupted_scale_fails_node_checks(self):
        doc = example_doc("example1")
        doc["parameters"]["s"] = [4.4, 0]
        rep = verify.run_report(parse_doc(doc), GridSpec.parse("-1:1:3,-1:1:3"), seed=0)
        assert not rep.checks["node_cancellation"].passed
        assert not rep.passed

    def test_one_dimensional_instance(self):
        from test_curve import MINIMAL_1D

        rep = verify.run_report(parse_doc(MINIMAL_1D), GridSpec.parse("-1:1:5"), seed=0)
        assert rep.passed
        assert not rep.checks["epd_equation"].applicable  # no mixed pair exists
        assert not rep.checks["reality_im"].applicable
        assert rep.checks["orthogonality"].n_samples == 5
        assert rep.checks["component_residue_sum"].max_residual < 1e-10


class TestScaleInvariance:
    def test_residuals_invariant_under_d_rescaling(self):
        # x rescales linearly with the normalization values and every
        # residual is normalized, so verdicts cannot move
        u = (0.45, -0.3)
        results = {}
        for c in (1.0, 2.5, -0.7):
            doc = example_doc("example3")
            d0 = doc["normalization"][0]["d"]
            doc["normalization"][0]["d"] = [c * d0[0], c * d0[1]]
            data = parse_doc(doc)
            s = verify.coordinates(data, u)
            eg = verify.egorov_checks(data, u)
            node_res, comp_res = verify.node_cancellation_residual(data, u, 1, 2)
            probes = verify.reality_probe_points(data, 7)
            results[c] = (
                verify.orthogonality_residual(s),
                eg.lame_residual,
                eg.beta_residual,
                node_res,
                comp_res,
                verify.epd_residual(data, u, 1, 2, probes[0]),
            )
        for c, vals in results.items():
            for v in vals:
                assert v < 1e-10, (c, vals)

    def test_complex_flow_point(self, example3):
        # flows may leave the real axis; the orthogonality identity is
        # analytic and survives, while reality is not claimed there
        s = verify.coordinates(example3, (0.3 + 0.2j, -0.1 + 0.05j))
        assert s.solved
        assert verify.orthogonality_residual(s) < 1e-10
        node_res, _ = verify.node_cancellation_residual(
            example3, (0.3 + 0.2j, -0.1 + 0.05j), 1, 2)
        assert node_res < 1e-10


def test_svg_gap_splitting():
    from bacurve.svg import render_coordinate_net

    xy = [
        [(0.0, 0.0), (1.0, 0.1), None, (3.0, 0.3), (4.0, 0.4)],
        [(0.0, 1.0), (1.0, 1.1), (2.0, 1.2), (3.0, 1.3), (4.0, 1.4)],
    ]
    text = render_coordinate_net(xy)
    # row 0 splits into two chunks around the gap; row 1 stays whole; of the
    # five columns, the gap column drops below two points and is skipped
    assert text.count("<polyline") == 3 + 4
