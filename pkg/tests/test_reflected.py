"""Reflected solver, optimal stopping equivalences, Picard iteration, truncation."""

import numpy as np
import pytest

from treebsde.bsde import Generator, solve_bsde
from treebsde.errors import DepthCapError
from treebsde.families import (
    random_generator,
    random_obstacle,
    random_reflected,
    random_terminal,
    standard_tree,
)
from treebsde.norms import norm_sp
from treebsde.processes import AdaptedProcess
from treebsde.reflected import (
    ReflectedInstance,
    _frozen_costs,
    check_skorokhod,
    picard_solve,
    snell_bruteforce,
    snell_dynamic_program,
    solve_reflected,
    truncate_instance,
    verify_snell_representation,
)
from treebsde.tree import TimeGrid, build_tree


@pytest.fixture(scope="module")
def tree():
    return standard_tree(n_steps=6)


class TestSolveReflected:
    def test_stays_above_obstacle(self, tree):
        inst = random_reflected(tree, 0)
        sol = solve_reflected(inst)
        for k in range(tree.n_steps + 1):
            assert float((sol.y.values[k] - inst.obstacle.values[k]).min()) >= -1e-12

    def test_push_nonnegative(self, tree):
        inst = random_reflected(tree, 1)
        sol = solve_reflected(inst)
        for k in range(tree.n_steps):
            assert float(sol.dk.values[k].min()) >= -1e-13

    @pytest.mark.parametrize("seed", range(20))
    def test_skorokhod_conditions(self, tree, seed):
        inst = random_reflected(tree, seed)
        sol = solve_reflected(inst)
        d = check_skorokhod(inst, sol)
        assert d["min_increment"] >= -1e-12
        assert d["complementarity"] <= 1e-12

    def test_low_obstacle_reduces_to_plain(self, tree):
        inst = random_reflected(tree, 3, margin=50.0)
        rsol = solve_reflected(inst)
        psol = solve_bsde(inst.plain())
        gap = max(np.abs(rsol.y.values[k] - psol.y.values[k]).max()
                  for k in range(tree.n_steps + 1))
        assert gap <= 1e-12
        assert max(np.abs(v).max() for v in rsol.dk.values) <= 1e-13

    def test_binding_obstacle_pushes(self, tree):
        inst = random_reflected(tree, 4, margin=-2.0)
        sol = solve_reflected(inst)
        total = sum(float(v.sum()) for v in sol.dk.values)
        assert total > 0.0

    def test_dynamics_residual(self, tree):
        inst = random_reflected(tree, 5)
        sol = solve_reflected(inst)
        assert sol.dynamics_residual(inst.gen) <= 1e-10

    def test_terminal_obstacle_clipped(self, tree):
        xi = random_terminal(tree, 6)
        obstacle = AdaptedProcess.constant(tree, 100.0)
        inst = ReflectedInstance(tree=tree, xi=xi, gen=random_generator(tree, 6),
                                 obstacle=obstacle)
        n = tree.n_steps
        assert np.array_equal(inst.obstacle.values[n], np.minimum(100.0, xi))

    def test_obstacle_monotonicity(self, tree):
        xi = random_terminal(tree, 7)
        gen = random_generator(tree, 7)
        s_low = random_obstacle(tree, 7, margin=1.0)
        s_high = AdaptedProcess(tree, [v + 0.5 for v in s_low.values])
        y_low = solve_reflected(ReflectedInstance(tree=tree, xi=xi, gen=gen, obstacle=s_low))
        y_high = solve_reflected(ReflectedInstance(tree=tree, xi=xi, gen=gen, obstacle=s_high))
        for k in range(tree.n_steps + 1):
            assert float((y_high.y.values[k] - y_low.y.values[k]).min()) >= -1e-12


class TestSnell:
    def test_dp_matches_solver(self, tree):
        inst = random_reflected(tree, 8)
        sol = solve_reflected(inst)
        costs = _frozen_costs(inst, sol)
        term = np.maximum(inst.xi, inst.obstacle.values[tree.n_steps])
        v, rule = snell_dynamic_program(tree, term, inst.obstacle, costs)
        gap = max(np.abs(v.values[k] - sol.y.values[k]).max()
                  for k in range(tree.n_steps + 1))
        assert gap <= 1e-10

    def test_bruteforce_matches_dp(self):
        small = standard_tree(n_steps=4, with_reveal=False)
        for seed in range(10):
            inst = random_reflected(small, seed)
            sol = solve_reflected(inst)
            costs = _frozen_costs(inst, sol)
            term = np.maximum(inst.xi, inst.obstacle.values[4])
            v, _ = snell_dynamic_program(small, term, inst.obstacle, costs)
            bv, _ = snell_bruteforce(small, term, inst.obstacle, costs)
            assert abs(float(v.values[0][0]) - bv) <= 1e-12

    def test_bruteforce_rule_is_consistent(self):
        small = standard_tree(n_steps=3, with_reveal=False)
        inst = random_reflected(small, 3)
        sol = solve_reflected(inst)
        costs = _frozen_costs(inst, sol)
        term = np.maximum(inst.xi, inst.obstacle.values[3])
        bv, rule = snell_bruteforce(small, term, inst.obstacle, costs)
        assert rule.value == bv
        assert rule.stopping_step().max() <= 3

    def test_depth_caps(self, tree):
        big = standard_tree(n_steps=13, d=1, with_reveal=False)
        obstacle = AdaptedProcess.constant(big, -1.0)
        xi = np.zeros(big.n_nodes(13))
        costs = [np.zeros(big.n_nodes(k)) for k in range(13)]
        with pytest.raises(DepthCapError):
            snell_dynamic_program(big, xi, obstacle, costs)
        with pytest.raises(DepthCapError):
            snell_bruteforce(tree, np.zeros(tree.n_nodes(6)),
                             AdaptedProcess.constant(tree, -1.0),
                             [np.zeros(tree.n_nodes(k)) for k in range(6)])

    @pytest.mark.parametrize("seed", range(10))
    def test_stopping_representations(self, tree, seed):
        inst = random_reflected(tree, seed)
        sol = solve_reflected(inst, scheme="implicit")
        for rep in verify_snell_representation(inst, sol):
            assert rep.passed, f"{rep.inequality_id}: defect {rep.lhs}"


class TestPicard:
    def test_limit_matches_direct(self, tree):
        inst = random_reflected(tree, 20)
        direct = solve_reflected(inst, scheme="implicit")
        sol, trace = picard_solve(inst)
        gap = max(np.abs(sol.y.values[k] - direct.y.values[k]).max()
                  for k in range(tree.n_steps + 1))
        assert gap <= 1e-9

    def test_contraction(self, tree):
        inst = random_reflected(tree, 21)
        _, trace = picard_solve(inst)
        ratios = trace.contraction_ratios
        assert ratios, "expected at least two iterations"
        assert max(ratios) < 1.0

    def test_driver_without_state_converges_in_one(self, tree):
        gen = Generator(fn=lambda k, y, z: np.full(y.shape, 0.3), l_y=0.0, l_z=0.0,
                        name="flat")
        inst = ReflectedInstance(tree=tree, xi=random_terminal(tree, 22), gen=gen,
                                 obstacle=random_obstacle(tree, 22, margin=1.0))
        _, trace = picard_solve(inst)
        assert len(trace.driver_change) <= 1


class TestTruncation:
    def test_cauchy_increments_decay_monotonically(self):
        """Exponential-of-the-walk terminal with a per-leaf smear, so the tail
        has mass in every truncation bracket; equally spaced levels then cut
        strictly less mass at each step."""
        tree = build_tree(TimeGrid(horizon=1.0, n_steps=12), d=1)
        w = tree.w[12][:, 0]
        rng = np.random.default_rng(77)
        xi = np.exp(1.2 * w + 0.8 * rng.uniform(-1.0, 1.0, size=w.shape))
        gen = random_generator(tree, 30, l_y=0.3, l_z=0.3)
        inst = ReflectedInstance(tree=tree, xi=xi, gen=gen,
                                 obstacle=AdaptedProcess.constant(tree, -5.0))
        levels = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
        sols = [solve_reflected(truncate_instance(inst, lv)) for lv in levels]
        incs = []
        for a, b in zip(sols, sols[1:]):
            dy = a.y - b.y
            incs.append(norm_sp(dy, 1.5))
        assert all(x > y for x, y in zip(incs, incs[1:])), incs
