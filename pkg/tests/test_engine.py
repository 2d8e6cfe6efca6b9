import numpy as np
import pytest

from spde.engine import (TreeAccumulator, experiment_context, path_chunks, simulate_path,
                         tree_reduce)
from spde.errors import ValidationError


class TestChunks:

    def test_fixed_chunks_cover_all_paths(self):
        chunks = path_chunks(20, 8)
        assert chunks == [range(0, 8), range(8, 16), range(16, 20)]

    def test_needs_a_path(self):
        with pytest.raises(ValidationError):
            path_chunks(0)


class TestTreeReduction:

    def test_association_order_depends_only_on_count(self):
        def concat(a, b):
            return f"({a}{b})"
        assert tree_reduce("abcde", concat) == "(((ab)(cd))e)"
        assert tree_reduce("abcd", concat) == "((ab)(cd))"

    def test_sums(self):
        assert tree_reduce(range(10)) == 45

    def test_empty(self):
        with pytest.raises(ValueError):
            TreeAccumulator().result()


class TestPaths:

    def test_context_is_cached_per_config(self, small_config):
        assert experiment_context(small_config) is experiment_context(small_config)

    def test_solution_and_noise_trace(self, small_config):
        ctx = experiment_context(small_config)
        u = simulate_path(ctx, 3)
        np.testing.assert_array_equal(u, simulate_path(ctx, 3))
        assert u.shape == (ctx.grid.nt + 1, ctx.grid.nx)
        trace = simulate_path(ctx, 3, source="noise_trace")
        assert trace.shape == (ctx.grid.nt, ctx.grid.nx)

    def test_picard_scheme_returns_last_iterate(self, config_factory):
        config = config_factory(solver={"scheme": "picard", "a": 0.5, "n_iters": 64})
        mild = config_factory(solver={"a": 0.5})
        np.testing.assert_allclose(simulate_path(experiment_context(config), 0),
                                   simulate_path(experiment_context(mild), 0),
                                   rtol=1e-12, atol=1e-12)
