import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from tarskimfg import markov as mk
from tarskimfg.engine import learn
from tarskimfg.errors import ResourceError, ShapeError, StructuralAssumptionViolation
from tarskimfg.oracle import equilibrium_oracle_markov
from tarskimfg.stochorder import flow_leq

COARSE = (0.0, 0.5, 1.0)


def mean_field(terminal, T=3):
    m = np.zeros((T + 1, 2))
    m[:, 0] = 1.0
    m[-1] = (1 - terminal, terminal)
    return m


def simplex_points(d, units):
    for cut in __import__("itertools").combinations(range(units + d - 1), d - 1):
        edges = (-1,) + cut + (units + d - 1,)
        yield np.array([edges[k + 1] - edges[k] - 1 for k in range(d)]) / units


@hst.composite
def prob_vectors(draw, d):
    w = np.array(draw(hst.lists(hst.integers(0, 20), min_size=d, max_size=d)), float)
    if w.sum() == 0:
        w[0] = 1.0
    return w / w.sum()


class TestVectorLattice:
    def test_idempotent(self):
        mu = np.array([0.3, 0.3, 0.4])
        assert np.allclose(mk.vec_meet(mu, mu), mu) and np.allclose(mk.vec_join(mu, mu), mu)

    def test_three_state_example(self):
        mu, nu = [0.5, 0.0, 0.5], [0.2, 0.6, 0.2]
        assert np.allclose(mk.vec_meet(mu, nu), [0.5, 0.3, 0.2], atol=1e-15)
        assert np.allclose(mk.vec_join(mu, nu), [0.2, 0.3, 0.5], atol=1e-15)

    def test_comparable_pair(self):
        assert np.array_equal(mk.vec_meet([1, 0], [0, 1]), [1, 0])
        assert np.array_equal(mk.vec_join([1, 0], [0, 1]), [0, 1])

    def test_meet_is_greatest_on_simplex_grid(self):
        mu, nu = np.array([0.5, 0.0, 0.5]), np.array([0.2, 0.6, 0.2])
        lo, hi = mk.vec_meet(mu, nu), mk.vec_join(mu, nu)
        for c in simplex_points(3, 10):
            if mk.vec_leq(c, mu) and mk.vec_leq(c, nu):
                assert mk.vec_leq(c, lo)
            if mk.vec_leq(mu, c) and mk.vec_leq(nu, c):
                assert mk.vec_leq(hi, c)

    @settings(max_examples=200)
    @given(hst.integers(2, 6).flatmap(lambda d: hst.tuples(prob_vectors(d), prob_vectors(d), prob_vectors(d))))
    def test_lattice_laws(self, triple):
        a, b, c = triple
        eq = lambda x, y: np.allclose(x, y, atol=1e-12, rtol=0)
        assert eq(mk.vec_meet(a, b), mk.vec_meet(b, a))
        assert eq(mk.vec_meet(mk.vec_meet(a, b), c), mk.vec_meet(a, mk.vec_meet(b, c)))
        assert eq(mk.vec_join(a, mk.vec_meet(a, b)), a)
        assert eq(mk.vec_meet(a, mk.vec_join(a, b)), a)
        lo = mk.vec_meet(a, b)
        assert mk.vec_leq(lo, a) and mk.vec_leq(lo, b)

    def test_rejects_off_simplex(self):
        with pytest.raises(ValueError):
            mk.check_prob_vector([0.5, 0.6])


class TestDynamics:
    def test_zero_control_parks_in_first_state(self):
        fam = mk.TransitionFamily.two_state_family(0.8, 0.8, COARSE)
        flow = mk.propagate([0.3, 0.7], fam, (0.0, 0.0, 0.0))
        assert np.array_equal(flow[1:], [[1, 0]] * 3)

    def test_full_control(self):
        fam = mk.TransitionFamily.two_state_family(0.8, 0.8, COARSE)
        flow = mk.propagate([1.0, 0.0], fam, (1.0, 1.0))
        assert np.allclose(flow[1:], [[0.2, 0.8], [0.2, 0.8]], atol=1e-15)

    def test_identity_family(self):
        fam = mk.TransitionFamily.from_matrices(COARSE, [np.eye(3)] * 3)
        flow = mk.propagate([0.2, 0.3, 0.5], fam, (0.5, 1.0))
        assert np.allclose(flow, [[0.2, 0.3, 0.5]] * 3)

    def test_rows_stay_on_simplex(self):
        rng = np.random.default_rng(0)
        fam = mk.TransitionFamily.two_state_family(0.6, 0.9, mk.uniform_grid(11))
        for _ in range(50):
            u = tuple(rng.choice(fam.control_grid, 5))
            flow = mk.propagate(rng.dirichlet([1, 1]), fam, u)
            assert np.all(flow >= -1e-12) and np.allclose(flow.sum(axis=1), 1.0, atol=1e-12)

    def test_family_monotone(self):
        rng = np.random.default_rng(1)
        fam = mk.TransitionFamily.two_state_family(0.6, 0.9, mk.uniform_grid(11))
        for _ in range(200):
            g1, g2 = np.sort(rng.choice(fam.control_grid, 2))
            a, b = rng.dirichlet([1, 1]), rng.dirichlet([1, 1])
            lo, hi = mk.vec_meet(a, b), mk.vec_join(a, b)
            assert mk.vec_leq(lo @ fam.matrix(g1), hi @ fam.matrix(g2))

    def test_invalid_two_state_parameters(self):
        with pytest.raises(ValueError):
            mk.TransitionFamily.two_state_family(0.9, 0.5, COARSE)

    def test_bad_matrix_shape(self):
        with pytest.raises(ShapeError):
            mk.TransitionFamily.from_matrices(COARSE, [np.eye(2)] * 2)


class TestCost:
    def test_zero_costs(self):
        model = mk.MarkovModel(np.array([1.0, 0.0]), 3, mk.TransitionFamily.two_state_family(0.8, 0.8, COARSE),
                               mk.MarkovCosts.zero())
        assert mk.cost(model, (1.0, 0.5, 0.0), mean_field(0.3)) == 0.0

    def test_benchmark_value(self):
        model = mk.two_state_benchmark()
        assert mk.cost(model, (0.3, 0.7, 1.0), mean_field(0.8)) == pytest.approx(0.08, abs=1e-15)

    def test_indifference(self):
        model = mk.two_state_benchmark()
        rng = np.random.default_rng(2)
        for _ in range(20):
            u = tuple(rng.choice(model.family.control_grid, 3))
            assert abs(mk.cost(model, u, mean_field(0.4))) < 1e-15

    def test_wrong_length(self):
        with pytest.raises(ShapeError):
            mk.cost(mk.two_state_benchmark(), (1.0,), mean_field(0.4))


class TestBestResponse:
    model = mk.two_state_benchmark()

    def test_negative_psi_keeps_mass_in_first_state(self):
        resp = mk.best_response_set(self.model, mean_field(0.0))
        assert resp and all(r.controls[-1] == 0.0 for r in resp)
        assert all(np.allclose(r.flow[-1], [1, 0]) for r in resp)

    def test_positive_psi_pushes_to_second_state(self):
        resp = mk.best_response_set(self.model, mean_field(0.8))
        assert all(r.controls[-1] == 1.0 for r in resp)
        assert all(np.allclose(r.flow[-1], [0.2, 0.8]) for r in resp)

    def test_indifference_every_path_optimal(self):
        resp = mk.best_response_set(self.model, mean_field(0.4), method="exhaustive")
        assert len(resp) == self.model.n_paths

    def test_extremal_selections_at_indifference(self):
        lo = mk.best_response_inf(self.model, mean_field(0.4))
        hi = mk.best_response_sup(self.model, mean_field(0.4))
        assert np.allclose(lo[-1], [1, 0]) and np.allclose(hi[-1], [0.2, 0.8])

    def test_unique_terminal_at_zero(self):
        lo = mk.best_response_inf(self.model, mean_field(0.0))
        hi = mk.best_response_sup(self.model, mean_field(0.0))
        assert np.allclose(lo[-1], [1, 0]) and np.allclose(hi[-1], [1, 0])

    def test_dp_and_exhaustive_agree(self):
        for terminal in (0.0, 0.4, 0.8):
            a = mk.best_response_inf(self.model, mean_field(terminal), "exhaustive")
            b = mk.best_response_inf(self.model, mean_field(terminal), "dp")
            assert np.allclose(a, b, atol=1e-12)
            a = mk.best_response_sup(self.model, mean_field(terminal), "exhaustive")
            b = mk.best_response_sup(self.model, mean_field(terminal), "dp")
            assert np.allclose(a, b, atol=1e-12)

    def test_budget_is_explicit(self):
        model = mk.two_state_benchmark()
        model.path_budget = 10
        with pytest.raises(ResourceError):
            mk.best_response_set(model, mean_field(0.4), method="exhaustive")

    def test_missing_extremum_is_reported(self):
        # state 2 reachable only through two incomparable routes: no optimal
        # control induces the cellwise meet of the optimal flows
        grid = (0.0, 1.0)
        A0 = np.array([[0.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        A1 = np.array([[0.5, 0.0, 0.5], [0.5, 0.0, 0.5], [0.5, 0.0, 0.5]])
        fam = mk.TransitionFamily.from_matrices(grid, [A0, A1])
        model = mk.MarkovModel(np.array([1.0, 0.0, 0.0]), 1, fam, mk.MarkovCosts.zero())
        flows = {tuple(r.flow[-1]) for r in mk.best_response_set(model, np.zeros((2, 3)) + [1, 0, 0])}
        assert len(flows) == 2
        with pytest.raises(StructuralAssumptionViolation):
            mk.best_response_inf(model, np.zeros((2, 3)) + [1, 0, 0])


class TestEquilibria:
    def test_coarse_grid_terminal_masses(self):
        model = mk.two_state_benchmark(COARSE)
        masses = sorted({round(float(f[-1, 1]), 12) for f in mk.enumerate_equilibria(model)})
        assert masses == [0.0, 0.4, 0.8]

    def test_zero_costs_every_flow(self):
        fam = mk.TransitionFamily.two_state_family(0.8, 0.8, COARSE)
        model = mk.MarkovModel(np.array([1.0, 0.0]), 3, fam, mk.MarkovCosts.zero())
        distinct = {np.round(f, 12).tobytes() for f in model.all_paths()[1]}
        assert len(mk.enumerate_equilibria(model)) == len(distinct)

    def test_positive_psi_unique_terminal_mass(self):
        model = mk.two_state_benchmark(COARSE, psi=mk.AffinePsi(1.0, 0.5))
        masses = {round(float(f[-1, 1]), 12) for f in mk.enumerate_equilibria(model)}
        assert masses == {0.8}

    def test_agrees_with_oracle(self):
        for psi in (mk.AffinePsi(1.0, -0.4), mk.AffinePsi(2.0, -1.0), mk.TablePsi([0, 0.5, 1], [-1, 0, 0.3])):
            model = mk.two_state_benchmark(COARSE, psi=psi)
            key = lambda f: np.round(f, 9).tobytes()
            assert sorted(map(key, mk.enumerate_equilibria(model))) == sorted(map(key, equilibrium_oracle_markov(model)))

    def test_chain_limits_are_extremal(self):
        model = mk.two_state_benchmark()
        game = mk.markov_game(model)
        up, down = learn(game, "up"), learn(game, "down")
        assert up.converged and down.converged
        assert up.iterations <= 3 and down.iterations <= 3
        for f in mk.enumerate_equilibria(model):
            mf = mk.as_measure_flow(f)
            assert flow_leq(up.limit, mf) and flow_leq(mf, down.limit)

    def test_decreasing_psi_breaks_chain(self):
        model = mk.two_state_benchmark(psi=mk.AffinePsi(-1.0, 0.4))
        with pytest.raises(StructuralAssumptionViolation):
            learn(mk.markov_game(model), "up")


class TestTwoStateControls:
    model = mk.two_state_benchmark()

    def test_meet_control_realizes_flow_meet(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            u, v = tuple(rng.random(3)), tuple(rng.random(3))
            fu = mk.propagate(self.model.eta, self.model.family, u)
            fv = mk.propagate(self.model.eta, self.model.family, v)
            w = mk.two_state_control_meet(self.model, u, v)
            fw = mk.propagate(self.model.eta, self.model.family, w)
            assert np.allclose(fw, [mk.vec_meet(a, b) for a, b in zip(fu, fv)], atol=1e-12)
            w = mk.two_state_control_join(self.model, u, v)
            fw = mk.propagate(self.model.eta, self.model.family, w)
            assert np.allclose(fw, [mk.vec_join(a, b) for a, b in zip(fu, fv)], atol=1e-12)

    def test_submodularity_probe(self):
        rep = mk.markov_submodularity_probe(self.model, np.random.default_rng(0), 200)
        assert rep.passed and rep.checked == 200

    def test_decreasing_psi_fails_probe(self):
        model = mk.two_state_benchmark(psi=mk.AffinePsi(-1.0, 0.4))
        assert not mk.markov_submodularity_probe(model, np.random.default_rng(0), 200).passed

    def test_interchange_probe(self):
        rng = np.random.default_rng(6)
        pairs = [(tuple(rng.random(3)), tuple(rng.random(3))) for _ in range(30)]
        rep = mk.interchange_probe(self.model, mean_field(0.8), pairs)
        assert rep["passed"]
