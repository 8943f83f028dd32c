"""Tree construction, exact laws, serialization, and failure modes."""

import numpy as np
import pytest

from treebsde.errors import OffGridError, SchemaError, TreeSizeError
from treebsde.tree import Reveal, TimeGrid, build_tree, deserialize_tree, serialize_tree, validate_tree


def _reveal(grid, k, labels=("a", "b", "c"), probs=(0.5, 0.3, 0.2)):
    return Reveal(time=grid.times[k], labels=labels, probs=probs)


class TestTimeGrid:
    def test_uniform_spacing(self):
        grid = TimeGrid(horizon=2.0, n_steps=8)
        assert grid.dt == pytest.approx(0.25)
        assert np.allclose(np.diff(grid.times), grid.dt)
        assert grid.times[0] == 0.0 and grid.times[-1] == 2.0

    def test_index_of_on_grid(self):
        grid = TimeGrid(horizon=1.0, n_steps=4)
        assert grid.index_of(0.5) == 2

    def test_index_of_off_grid(self):
        grid = TimeGrid(horizon=1.0, n_steps=4)
        with pytest.raises(OffGridError):
            grid.index_of(0.3)

    def test_bad_shape(self):
        with pytest.raises(ValueError):
            TimeGrid(horizon=-1.0, n_steps=4)
        with pytest.raises(ValueError):
            TimeGrid(horizon=1.0, n_steps=0)


class TestBuildTree:
    def test_counts_binary(self):
        tree = build_tree(TimeGrid(horizon=1.0, n_steps=3), d=1)
        assert [tree.n_nodes(k) for k in range(4)] == [1, 2, 4, 8]

    def test_counts_d2(self):
        tree = build_tree(TimeGrid(horizon=1.0, n_steps=2), d=2)
        assert [tree.n_nodes(k) for k in range(3)] == [1, 4, 16]

    def test_reveal_multiplies_branching(self):
        grid = TimeGrid(horizon=1.0, n_steps=2)
        tree = build_tree(grid, d=1, reveals=(_reveal(grid, 1),))
        # the reveal at t_1 happens on the step into t_1
        assert tree.n_nodes(1) == 6
        assert tree.n_nodes(2) == 12

    def test_increment_moments_exact(self):
        grid = TimeGrid(horizon=1.0, n_steps=3)
        tree = build_tree(grid, d=2, reveals=(_reveal(grid, 2),))
        stats = validate_tree(tree)
        assert stats["dw_mean"] <= 1e-14
        assert stats["dw_cov"] <= 1e-14
        assert stats["reveal_indep"] <= 1e-14

    def test_path_probs_sum_to_one(self):
        grid = TimeGrid(horizon=1.0, n_steps=4)
        tree = build_tree(grid, d=1, reveals=(_reveal(grid, 2),))
        for k in range(5):
            assert float(tree.path_prob[k].sum()) == pytest.approx(1.0, abs=1e-14)

    def test_walk_martingale(self):
        grid = TimeGrid(horizon=1.0, n_steps=4)
        tree = build_tree(grid, d=1, reveals=(_reveal(grid, 2),))
        for k in range(1, 5):
            prev = tree.cond_exp(tree.w[k][:, 0], k)
            assert np.abs(prev - tree.w[k - 1][:, 0]).max() <= 1e-14

    def test_node_cap(self):
        with pytest.raises(TreeSizeError):
            build_tree(TimeGrid(horizon=1.0, n_steps=25), d=1)

    def test_off_grid_reveal(self):
        grid = TimeGrid(horizon=1.0, n_steps=4)
        with pytest.raises(OffGridError):
            build_tree(grid, d=1, reveals=(Reveal(time=0.3, labels=("a", "b"),
                                                  probs=(0.5, 0.5)),))

    def test_reveal_prob_validation(self):
        grid = TimeGrid(horizon=1.0, n_steps=4)
        with pytest.raises(ValueError):
            Reveal(time=0.5, labels=("a", "b"), probs=(0.7, 0.2))


class TestConditionalExpectation:
    def test_tower_property(self):
        grid = TimeGrid(horizon=1.0, n_steps=4)
        tree = build_tree(grid, d=1, reveals=(_reveal(grid, 2),))
        rng = np.random.default_rng(0)
        x = rng.normal(size=tree.n_nodes(4))
        step_by_step = x
        for k in range(4, 0, -1):
            step_by_step = tree.cond_exp(step_by_step, k)
        assert float(step_by_step[0]) == pytest.approx(
            tree.expectation(x, 4), abs=1e-14)

    def test_lift_then_condition_is_identity(self):
        grid = TimeGrid(horizon=1.0, n_steps=3)
        tree = build_tree(grid, d=1, reveals=(_reveal(grid, 1),))
        rng = np.random.default_rng(1)
        for k in range(3):
            x = rng.normal(size=tree.n_nodes(k))
            assert np.abs(tree.cond_exp(tree.lift(x, k), k + 1) - x).max() <= 1e-14

    def test_reveal_independent_of_walk(self):
        grid = TimeGrid(horizon=1.0, n_steps=2)
        tree = build_tree(grid, d=1, reveals=(_reveal(grid, 1),))
        k = 1
        lab = tree.reveal_label[k].astype(float)
        dw = tree.dw[k][:, 0]
        e_joint = tree.cond_exp(lab * dw, k)
        e_prod = tree.cond_exp(lab, k) * tree.cond_exp(dw, k)
        assert np.abs(e_joint - e_prod).max() <= 1e-14


class TestSerialization:
    def test_round_trip_bytes_identical(self):
        grid = TimeGrid(horizon=1.0, n_steps=3)
        tree = build_tree(grid, d=2, reveals=(_reveal(grid, 2, labels=("u", "v"),
                                                      probs=(0.4, 0.6)),))
        blob = serialize_tree(tree)
        again = serialize_tree(deserialize_tree(blob))
        assert blob == again

    def test_round_trip_preserves_structure(self):
        grid = TimeGrid(horizon=1.0, n_steps=3)
        tree = build_tree(grid, d=1, reveals=(_reveal(grid, 1),))
        back = deserialize_tree(serialize_tree(tree))
        for k in range(4):
            assert np.array_equal(back.cond_prob[k], tree.cond_prob[k])
            assert np.array_equal(back.dw[k], tree.dw[k])
            assert np.array_equal(back.reveal_label[k], tree.reveal_label[k])

    def test_deterministic_build(self):
        grid = TimeGrid(horizon=1.0, n_steps=4)
        r = (_reveal(grid, 2),)
        a = serialize_tree(build_tree(grid, d=1, reveals=r))
        b = serialize_tree(build_tree(grid, d=1, reveals=r))
        assert a == b

    def test_malformed_blob(self):
        with pytest.raises(SchemaError):
            deserialize_tree(b'{"version": 99}')
