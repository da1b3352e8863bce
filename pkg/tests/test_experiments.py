import io
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from lbpconv import LbpOptions, serialize_factor_graph, to_ising
from lbpconv.experiments import (
    CSV_HEADER,
    GridSpec,
    SweepRow,
    box_muller,
    emit_csv,
    emit_phase_plot,
    empirical_convergence,
    generate_grid,
    grid_couplings,
    phase_boundaries,
    read_csv,
    run_sweep,
)

from _graphs import random_tree

SVG = "{http://www.w3.org/2000/svg}"


def row(j0, sigma, rho, l1=None, ihler=None, conv=True, instance=0):
    l1 = rho if l1 is None else l1
    ihler = l1 if ihler is None else ihler
    return SweepRow(instance, 0, j0, sigma, l1, rho, ihler, l1 < 1, rho < 1, ihler < 1, conv, 10, 1e-10)


class TestGrid:
    def test_box_muller_recipe(self):
        u = np.random.Generator(np.random.PCG64(42)).random(6)
        expect = []
        for k in range(0, 6, 2):
            r = math.sqrt(-2.0 * math.log(1.0 - u[k]))
            expect += [r * math.cos(2 * math.pi * u[k + 1]), r * math.sin(2 * math.pi * u[k + 1])]
        np.testing.assert_allclose(box_muller(42, 5), expect[:5], rtol=1e-15)

    def test_box_muller_moments(self):
        z = box_muller(0, 200000)
        assert abs(z.mean()) < 0.01 and abs(z.std() - 1) < 0.01

    def test_sigma_zero_exact(self):
        for _, _, J in grid_couplings(GridSpec(5, 4, True, 0.37, 0.0, seed=9)):
            assert J == 0.37

    def test_deterministic(self):
        s = GridSpec(6, 6, True, 0.1, 0.8, seed=3)
        assert serialize_factor_graph(generate_grid(s)) == serialize_factor_graph(generate_grid(s))
        other = GridSpec(6, 6, True, 0.1, 0.8, seed=4)
        assert serialize_factor_graph(generate_grid(s)) != serialize_factor_graph(generate_grid(other))

    def test_torus_counts(self):
        g = generate_grid(GridSpec(10, 10, True, 0.2, 0.5))
        assert g.num_vars == 100 and g.num_factors == 200 and len(g.edges) == 400
        assert all(len(n) == 4 for n in g.var_neighbors)

    def test_open_grid_counts(self):
        g = generate_grid(GridSpec(2, 2, False, 1.0, 0.0))
        assert g.num_vars == 4 and g.num_factors == 4
        g = generate_grid(GridSpec(3, 5, False))
        assert g.num_factors == 3 * 4 + 2 * 5

    def test_edge_order(self):
        pairs = [(i, j) for i, j, _ in grid_couplings(GridSpec(3, 3, True))]
        assert pairs[:4] == [(0, 1), (0, 3), (1, 2), (1, 4)]
        assert pairs[4:6] == [(2, 0), (2, 5)]

    def test_couplings_mapped_through_ising(self):
        s = GridSpec(4, 4, True, -0.2, 0.6, theta=0.3, seed=1)
        m = to_ising(generate_grid(s))
        for i, j, J in grid_couplings(s):
            assert m.coupling(i, j) == pytest.approx(J, abs=1e-14)
        np.testing.assert_allclose(m.fields, 0.3, atol=1e-14)
        assert generate_grid(s).num_factors == 32 + 16

    @pytest.mark.parametrize("kw", [dict(rows=1), dict(cols=0), dict(sigma=-1.0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            GridSpec(**kw)


class TestEmpirical:
    def test_tree(self):
        res = empirical_convergence(random_tree(np.random.default_rng(0)), 4)
        assert res.fraction_converged == 1.0 and res.spread < 1e-7

    def test_weak_torus(self):
        res = empirical_convergence(generate_grid(GridSpec(10, 10, True, 0.1, 0.0)), 3)
        assert res.fraction_converged == 1.0 and res.spread < 1e-7

    def test_strong_torus_recorded(self):
        res = empirical_convergence(generate_grid(GridSpec(10, 10, True, 5.0, 0.0)), 3, LbpOptions(max_iters=300))
        # no theorem here; the value is only required to be a valid fraction
        assert 0.0 <= res.fraction_converged <= 1.0
        assert res.max_iterations <= 300

    def test_trials_validated(self):
        with pytest.raises(ValueError):
            empirical_convergence(random_tree(np.random.default_rng(1)), 0)


class TestSweep:
    def test_sub_threshold(self):
        rows = run_sweep([GridSpec(6, 6, True, 0.15, 0.0)], 2, trials=2)
        assert len(rows) == 2
        for r in rows:
            assert r.l1_pass and r.spectral_pass and r.ihler_pass and r.empirical_converged

    def test_order_and_seeds(self):
        specs = [GridSpec(4, 4, True, 0.0, s, seed=10) for s in (0.2, 0.4)]
        rows = run_sweep(specs, 3, trials=1)
        assert [(r.sigma, r.instance, r.seed) for r in rows] == [
            (0.2, 0, 10), (0.2, 1, 11), (0.2, 2, 12), (0.4, 0, 10), (0.4, 1, 11), (0.4, 2, 12)]

    def test_parallel_matches_serial(self):
        specs = [GridSpec(4, 4, True, 0.0, s) for s in (0.3, 0.9)]
        a, b = run_sweep(specs, 2, trials=2), run_sweep(specs, 2, trials=2, workers=2)
        out_a, out_b = io.StringIO(), io.StringIO()
        emit_csv(a, out_a)
        emit_csv(b, out_b)
        assert out_a.getvalue() == out_b.getvalue()

    def test_orderings_and_soundness(self):
        specs = [GridSpec(5, 5, True, 0.0, s) for s in (0.2, 0.5, 0.8)]
        for r in run_sweep(specs, 3, trials=2):
            assert r.rho <= r.l1_value + 1e-6
            assert r.l1_value <= r.ihler_value + 1e-6
            assert not (r.spectral_pass and not r.empirical_converged)

    def test_empty_specs(self):
        with pytest.raises(ValueError):
            run_sweep([], 1)


class TestCsv:
    def test_header_only(self):
        out = io.StringIO()
        emit_csv([], out)
        assert out.getvalue() == CSV_HEADER + "\n"

    def test_one_row(self):
        out = io.StringIO()
        emit_csv([row(0.1, 0.2, 0.3)], out)
        lines = out.getvalue().splitlines()
        assert len(lines) == 2
        assert lines[1] == "0,0,0.1,0.2,0.3,0.3,0.3,true,true,true,true,10,1e-10"

    def test_round_trip_bit_exact(self):
        rows = run_sweep([GridSpec(4, 4, True, 0.1, 0.7, seed=5)], 3, trials=2)
        out = io.StringIO()
        emit_csv(rows, out)
        back = read_csv(io.StringIO(out.getvalue()))
        for a, b in zip(rows, back):
            for name in CSV_HEADER.split(","):
                assert getattr(a, name) == getattr(b, name)
                assert type(getattr(b, name)) is type(getattr(a, name))

    def test_bad_header(self):
        with pytest.raises(ValueError):
            read_csv(io.StringIO("a,b\n1,2\n"))


class TestPhasePlot:
    def parse(self, rows):
        out = io.StringIO()
        emit_phase_plot(rows, out)
        return ET.fromstring(out.getvalue().split("?>", 1)[1])

    def test_single_point(self):
        root = self.parse([row(0.0, 0.5, 0.8)])
        assert root.tag == SVG + "svg"
        for name in ("empirical", "spectral", "l1", "ihler"):
            assert len(root.findall(f"{SVG}circle[@class='{name}']")) == 1
        texts = [t.text for t in root.iter(SVG + "text")]
        assert "J0/J" in texts and "J" in texts
        assert any("not available" in t for t in texts)

    def test_uniform_line_boundary(self):
        j0s = np.round(np.arange(0.30, 0.40, 0.01), 2)
        rows = [row(float(j), 0.0, 3 * math.tanh(j), conv=True) for j in j0s]
        b = phase_boundaries(rows)["spectral"]
        assert len(b) == 1
        assert b[0][0] == pytest.approx(math.atanh(1 / 3), abs=2e-4)
        root = self.parse(rows)
        assert "J0 (J = 0)" in [t.text for t in root.iter(SVG + "text")]

    def test_sigma_walk(self):
        rows = [row(j0, s, s * 2.0) for j0 in (0.0, 0.5) for s in (0.25, 0.5, 0.75)]
        b = phase_boundaries(rows)["spectral"]
        assert b == [(0.0, pytest.approx(0.5)), (0.5, pytest.approx(0.5))]
        self.parse(rows)

    def test_not_a_lattice(self):
        with pytest.raises(ValueError):
            phase_boundaries([row(0.0, 0.1, 0.5), row(0.1, 0.2, 0.5)])
        with pytest.raises(ValueError):
            emit_phase_plot([], io.StringIO())
