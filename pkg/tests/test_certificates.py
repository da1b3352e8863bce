import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from lbpconv import (
    CertificateReport,
    Factor,
    FactorGraph,
    IsingModel,
    binary_update,
    bound_matrix,
    bound_matrix_binary,
    ihler_condition,
    l1_condition_binary,
    l1_condition_general,
    spectral_condition,
    spectral_condition_binary,
    strength_D_pairwise,
    strength_N,
    to_ising,
)
from lbpconv.experiments import GridSpec, generate_grid, ising_pair_factor

from _graphs import cycle_graph, ising_graph, random_binary_pairwise, random_loopy, random_tree


def strength_N_enumerated(f, i, j):
    """Direct four-way maximisation of the log cross-ratio, no separability used."""
    arr = np.log(f.array())
    ai, aj = f.vars.index(i), f.vars.index(j)
    arr = np.moveaxis(arr, (ai, aj), (0, 1))
    rest = list(itertools.product(*[range(c) for c in arr.shape[2:]]))
    best = -np.inf
    for a, a2 in itertools.permutations(range(arr.shape[0]), 2):
        for b, b2 in itertools.permutations(range(arr.shape[1]), 2):
            for c in rest:
                for c2 in rest:
                    v = arr[(a, b) + c] + arr[(a2, b2) + c2] - arr[(a2, b) + c] - arr[(a, b2) + c2]
                    best = max(best, v)
    return math.tanh(0.25 * best)


def pair_table_with_field(J, theta):
    # exp(J x_i x_j + theta x_i), state 0 -> -1, first variable fastest
    return Factor((0, 1), (2, 2), [math.exp(J * a * b + theta * a) for b in (-1, 1) for a in (-1, 1)])


tables = st.integers(0, 2**32 - 1).map(np.random.default_rng)


class TestReport:
    def test_to_dict_round_trip(self):
        r = CertificateReport("l1-general", 0.5, True, {"k": [1, 2]})
        d = json.loads(json.dumps(r.to_dict()))
        assert set(d) == {"condition", "value", "pass", "detail"}
        assert d["pass"] is True and r.verdict == "GUARANTEED"
        assert CertificateReport("x", 2.0, False).verdict == "INCONCLUSIVE"


class TestIsing:
    def test_ising_table(self):
        g = FactorGraph((2, 2), [ising_pair_factor(0, 1, 1.0)])
        m = to_ising(g)
        assert m.coupling(0, 1) == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(m.fields, 0.0, atol=1e-15)

    def test_uniform_table(self):
        m = to_ising(FactorGraph((2, 2), [Factor((0, 1), (2, 2), np.ones(4))]))
        assert m.coupling(0, 1) == 0.0
        assert not m.fields.any()

    def test_field_recovered(self):
        g = FactorGraph((2, 2), [pair_table_with_field(0.5, 1.0), Factor((1,), (2,), [math.exp(-0.3), math.exp(0.3)])])
        m = to_ising(g)
        assert m.coupling(0, 1) == pytest.approx(0.5)
        np.testing.assert_allclose(m.fields, [1.0, 0.3])

    def test_ternary_rejected(self):
        with pytest.raises(ValueError):
            to_ising(FactorGraph((2, 3), [Factor((0, 1), (2, 3), np.ones(6))]))

    def test_higher_arity_rejected(self):
        with pytest.raises(ValueError):
            to_ising(FactorGraph((2, 2, 2), [Factor((0, 1, 2), (2, 2, 2), np.ones(8))]))

    def test_model_validation(self):
        with pytest.raises(ValueError):
            IsingModel(2, {(0, 0): 1.0}, None)
        with pytest.raises(ValueError):
            IsingModel(2, {(0, 1): 1.0, (1, 0): 2.0}, None)
        m = IsingModel(3, {(2, 0): 0.5}, None)
        assert list(m.couplings) == [(0, 2)] and m.coupling(2, 0) == 0.5


class TestBinaryUpdate:
    def test_zero_coupling(self):
        m = IsingModel(3, {(0, 1): 0.0, (1, 2): 1.0}, [0.3, 0.2, 0.1])
        out = binary_update(m, np.full(4, 0.7))
        assert out[m.pair_index[(1, 0)]] == 0.0

    def test_isolated_pair(self):
        m = IsingModel(2, {(0, 1): 1.3}, None)
        np.testing.assert_array_equal(binary_update(m, np.array([0.4, -0.2])), [0.0, 0.0])

    def test_closed_form(self):
        # i = 0, j = 1, k = 2: theta_j = 0.5, nu[k->j] = 0.3, J_ij = 1
        m = IsingModel(3, {(0, 1): 1.0, (1, 2): 0.7}, [0.0, 0.5, 0.0])
        nu = np.zeros(4)
        nu[m.pair_index[(2, 1)]] = 0.3
        out = binary_update(m, nu)
        assert out[m.pair_index[(1, 0)]] == pytest.approx(math.atanh(math.tanh(1.0) * math.tanh(0.8)), abs=1e-15)

    def test_saturation_is_finite(self):
        m = IsingModel(3, {(0, 1): 40.0, (1, 2): 40.0}, [0.0, 50.0, 0.0])
        assert np.all(np.isfinite(binary_update(m, np.full(4, 30.0))))


class TestStrengths:
    def test_constant_factor(self):
        f = Factor((0, 1, 2), (2, 3, 2), np.full(12, 3.0))
        assert strength_N(f, 0, 1) == 0.0
        assert strength_D_pairwise(Factor((0, 1), (3, 2), np.full(6, 2.0))) == 0.0

    @pytest.mark.parametrize("J", [-2.0, -0.5, 0.1, 0.5, 1.0, 3.0])
    def test_ising_pair(self, J):
        f = ising_pair_factor(0, 1, J)
        assert strength_N(f, 0, 1) == pytest.approx(math.tanh(abs(J)), abs=1e-12)
        assert strength_D_pairwise(f) == pytest.approx(math.tanh(abs(J)), abs=1e-12)

    def test_tanh_half(self):
        assert strength_N(ising_pair_factor(0, 1, 0.5), 1, 0) == pytest.approx(0.4621171572600098, abs=1e-15)

    def test_field_separates_D_from_N(self):
        f = pair_table_with_field(0.5, 1.0)
        assert strength_D_pairwise(f) == pytest.approx(math.tanh(1.5))
        assert strength_N(f, 0, 1) == pytest.approx(math.tanh(0.5))

    def test_errors(self):
        f = Factor((0, 1, 2), (2, 2, 2), np.arange(1.0, 9.0))
        with pytest.raises(ValueError):
            strength_N(f, 0, 0)
        with pytest.raises(ValueError):
            strength_N(f, 0, 5)
        with pytest.raises(ValueError):
            strength_D_pairwise(f)

    @settings(max_examples=60, deadline=None)
    @given(tables, st.lists(st.integers(2, 3), min_size=2, max_size=3))
    def test_matches_enumeration(self, rng, cards):
        f = Factor(tuple(range(len(cards))), tuple(cards), np.exp(rng.uniform(-3, 3, int(np.prod(cards)))))
        for i, j in itertools.permutations(range(len(cards)), 2):
            assert strength_N(f, i, j) == pytest.approx(strength_N_enumerated(f, i, j), abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(tables, st.integers(2, 4), st.integers(2, 4))
    def test_N_le_D_and_symmetric(self, rng, ci, cj):
        f = Factor((0, 1), (ci, cj), np.exp(rng.uniform(-3, 3, ci * cj)))
        n = strength_N(f, 0, 1)
        assert 0.0 <= n <= strength_D_pairwise(f) + 1e-12
        assert n == pytest.approx(strength_N(f, 1, 0), abs=1e-14)

    @settings(max_examples=40, deadline=None)
    @given(tables)
    def test_invariant_under_single_variable_rescaling(self, rng):
        cards = (2, 3, 2)
        arr = np.exp(rng.uniform(-2, 2, cards))
        f = Factor.from_array((0, 1, 2), arr)
        scaled = arr * np.exp(rng.uniform(-2, 2, (2, 1, 1))) * np.exp(rng.uniform(-2, 2, (1, 3, 1)))
        scaled = scaled * np.exp(rng.uniform(-2, 2, (1, 1, 2)))
        g = Factor.from_array((0, 1, 2), scaled)
        for i, j in itertools.permutations(range(3), 2):
            assert strength_N(g, i, j) == pytest.approx(strength_N(f, i, j), abs=1e-12)


def star(J, leaves=3):
    return ising_graph(leaves + 1, {(0, k): J for k in range(1, leaves + 1)})


class TestConditions:
    def test_zero_couplings(self):
        m = IsingModel(4, {(0, 1): 0.0, (1, 2): 0.0, (2, 3): 0.0}, None)
        r = l1_condition_binary(m)
        assert r.value == 0.0 and r.passed

    def test_star(self):
        r = l1_condition_binary(to_ising(star(0.4)))
        assert r.value == pytest.approx(2 * math.tanh(0.4), abs=1e-15)
        assert r.detail["worst_pair"][1] == 0  # edge into the centre
        assert l1_condition_general(star(0.4)).value == pytest.approx(2 * math.tanh(0.4), abs=1e-15)

    @pytest.mark.parametrize("J", [0.1, 0.3, 0.4])
    def test_torus(self, J):
        g = generate_grid(GridSpec(10, 10, True, J, 0.0))
        three = 3 * math.tanh(J)
        assert l1_condition_binary(to_ising(g)).value == pytest.approx(three, abs=1e-12)
        assert l1_condition_general(g).value == pytest.approx(three, abs=1e-12)
        assert ihler_condition(g).value == pytest.approx(three, abs=1e-12)
        assert l1_condition_general(g).passed == (three < 1)

    def test_uniform_potentials(self):
        g = FactorGraph((2, 3, 2), [Factor((0, 1), (2, 3), np.ones(6)), Factor((1, 2), (3, 2), np.ones(6)),
                                    Factor((0, 2), (2, 2), np.ones(4))])
        r = l1_condition_general(g)
        assert r.value == 0.0 and r.passed

    def test_single_triple_factor(self):
        g = FactorGraph((2, 3, 2), [Factor((0, 1, 2), (2, 3, 2), np.arange(1.0, 13.0))])
        r = l1_condition_general(g)
        assert r.value == 0.0 and r.passed

    def test_general_matches_binary(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            g = random_binary_pairwise(rng, n_max=12, scale=1.5)
            assert l1_condition_general(g).value == pytest.approx(l1_condition_binary(to_ising(g)).value, abs=1e-12)

    def test_ihler_dominates_l1(self):
        rng = np.random.default_rng(6)
        for _ in range(30):
            g = random_binary_pairwise(rng, n_max=12, scale=1.5)
            assert l1_condition_general(g).value <= ihler_condition(g).value + 1e-12

    def test_ihler_needs_pairwise(self):
        with pytest.raises(ValueError):
            ihler_condition(FactorGraph((2, 2, 2), [Factor((0, 1, 2), (2, 2, 2), np.ones(8))]))

    def test_spectral_binary_agrees(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            g = random_binary_pairwise(rng, n_max=12, scale=0.6)
            a = spectral_condition(g)
            b = spectral_condition_binary(to_ising(g))
            assert a.value == pytest.approx(b.value, abs=1e-6)


class TestBoundMatrix:
    def test_single_pair(self):
        A = bound_matrix(FactorGraph((2, 2), [ising_pair_factor(0, 1, 0.8)]))
        assert A.dim == 2 and not A.to_dense().any()

    def test_three_cycle(self):
        A = bound_matrix(cycle_graph(3, 0.6)).to_dense()
        assert A.shape == (6, 6)
        for row in A:
            nz = row[row != 0]
            assert len(nz) == 1 and nz[0] == pytest.approx(math.tanh(0.6), abs=1e-15)

    def test_tree_nilpotent(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            g = random_tree(rng)
            A = bound_matrix(g).to_dense()
            v = np.ones(len(A))
            for _ in range(len(A)):
                v = A @ v
            assert not v.any()

    def test_loopy_not_nilpotent(self):
        A = bound_matrix(cycle_graph(5, 0.5)).to_dense()
        assert np.linalg.matrix_power(A, 10).any()

    def test_binary_and_general_agree(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            g = random_binary_pairwise(rng, n_max=10)
            m = to_ising(g)
            gen = bound_matrix(g).to_dense()
            binm = bound_matrix_binary(m).to_dense()
            # general edge (I -> i) of pair factor I = {i, j} is binary pair j -> i
            pos = {}
            for e, (I, i) in enumerate(g.edges):
                f = g.factors[I]
                if f.arity == 2:
                    j = f.vars[0] if f.vars[1] == i else f.vars[1]
                    pos[e] = m.pair_index[(j, i)]
            for e, d in pos.items():
                for e2, d2 in pos.items():
                    assert gen[e, e2] == pytest.approx(binm[d, d2], abs=1e-14)

    def test_arity_one_edges_carry_no_weight(self):
        g = random_loopy(np.random.default_rng(14))
        A = bound_matrix(g)
        for e, (I, _) in enumerate(g.edges):
            if g.factors[I].arity == 1:
                assert A.column_sums()[e] == 0.0
                assert A.to_dense()[e].sum() == 0.0

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_l1_is_max_column_sum(self, seed):
        g = random_loopy(np.random.default_rng(seed))
        A = bound_matrix(g).to_dense()
        assume(A.size)
        assert l1_condition_general(g).value == pytest.approx(A.sum(axis=0).max(), abs=1e-12)
