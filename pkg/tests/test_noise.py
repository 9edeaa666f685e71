"""Brownian grid generation, coarsening, and the binary dump format."""

import struct

import numpy as np
import pytest

from mvnsdde import GridError, coarsen, generate, load
from mvnsdde.noise import gaussian_block


class TestGenerate:
    def test_same_seed_bit_identical(self):
        a = generate(123, particles=7, bm_dim=2, delta_base=0.125, horizon=2.0)
        b = generate(123, particles=7, bm_dim=2, delta_base=0.125, horizon=2.0)
        assert np.array_equal(a.increments, b.increments)

    def test_adjacent_seeds_differ(self):
        a = generate(5, particles=10, bm_dim=1, delta_base=0.01, horizon=1.0)
        b = generate(6, particles=10, bm_dim=1, delta_base=0.01, horizon=1.0)
        assert not np.array_equal(a.increments, b.increments)

    def test_moment_bounds_single_step(self):
        n = 10_000
        grid = generate(77, particles=n, bm_dim=1, delta_base=0.25, horizon=0.25)
        incs = grid.step_slice(0)[:, 0]
        assert abs(incs.mean()) <= 4.0 * np.sqrt(0.25 / n)
        assert abs(incs.var(ddof=1) / 0.25 - 1.0) <= 0.05

    def test_particle_prefix_property(self):
        big = generate(42, particles=8, bm_dim=2, delta_base=0.5, horizon=4.0)
        small = generate(42, particles=3, bm_dim=2, delta_base=0.5, horizon=4.0)
        assert np.array_equal(big.increments[:, :3, :], small.increments)
        assert np.array_equal(
            big.restrict(3).increments, small.increments
        )

    def test_entry_matches_per_particle_block(self):
        grid = generate(9, particles=4, bm_dim=3, delta_base=0.2, horizon=1.0)
        block = gaussian_block(9, 2, steps=5, bm_dim=3, delta=0.2)
        assert np.array_equal(grid.increments[:, 2, :], block)
        assert np.array_equal(grid.increment(2, 4), block[4])

    def test_cross_correlations_small(self):
        n = 100_000
        grid = generate(11, particles=2, bm_dim=2, delta_base=1.0, horizon=n)
        flat = grid.increments.reshape(n, 4)
        corr = np.corrcoef(flat.T)
        off = corr[~np.eye(4, dtype=bool)]
        assert np.max(np.abs(off)) < 5.0 / np.sqrt(n)

    def test_non_integer_step_count(self):
        with pytest.raises(GridError):
            generate(1, particles=1, bm_dim=1, delta_base=0.3, horizon=1.0)

    def test_bad_arguments(self):
        with pytest.raises(GridError):
            generate(-1, particles=1, bm_dim=1, delta_base=0.5, horizon=1.0)
        with pytest.raises(GridError):
            generate(1, particles=0, bm_dim=1, delta_base=0.5, horizon=1.0)
        with pytest.raises(GridError):
            generate(1, particles=1, bm_dim=1, delta_base=-0.5, horizon=1.0)

    def test_increments_immutable(self):
        grid = generate(1, particles=1, bm_dim=1, delta_base=0.5, horizon=1.0)
        with pytest.raises(ValueError):
            grid.increments[0, 0, 0] = 0.0


class TestCoarsen:
    def test_factor_one_is_identity(self):
        grid = generate(3, particles=2, bm_dim=1, delta_base=0.25, horizon=1.0)
        out = coarsen(grid, 1)
        assert np.array_equal(out.increments, grid.increments)
        assert out.delta_base == grid.delta_base

    def test_two_steps_sum(self):
        grid = generate(4, particles=3, bm_dim=2, delta_base=0.5, horizon=1.0)
        out = grid.coarsen(2)
        assert out.steps == 1
        assert out.delta_base == 1.0
        expect = grid.increments[0] + grid.increments[1]
        assert np.array_equal(out.increments[0], expect)

    def test_endpoint_sums_preserved(self):
        grid = generate(8, particles=5, bm_dim=2, delta_base=0.125, horizon=4.0)
        base_end = grid.increments.sum(axis=0)
        for k in (2, 4, 8, 16):
            end = coarsen(grid, k).increments.sum(axis=0)
            np.testing.assert_allclose(end, base_end, rtol=1e-12, atol=1e-14)

    def test_composition(self):
        grid = generate(15, particles=4, bm_dim=1, delta_base=0.0625, horizon=4.0)
        a = coarsen(coarsen(grid, 2), 4)
        b = coarsen(grid, 8)
        assert a.delta_base == b.delta_base
        assert a.steps == b.steps
        np.testing.assert_allclose(a.increments, b.increments, rtol=1e-12)

    def test_divisibility_error(self):
        grid = generate(2, particles=1, bm_dim=1, delta_base=0.2, horizon=1.0)
        with pytest.raises(GridError):
            coarsen(grid, 3)
        with pytest.raises(GridError):
            coarsen(grid, 0)

    def test_variance_scales_with_factor(self):
        grid = generate(21, particles=2000, bm_dim=1, delta_base=0.01, horizon=1.0)
        out = coarsen(grid, 10)
        var = out.increments.var(ddof=1)
        assert abs(var / 0.1 - 1.0) < 0.05


class TestDump:
    def test_round_trip(self, tmp_path):
        grid = generate(99, particles=3, bm_dim=2, delta_base=0.25, horizon=2.0)
        path = tmp_path / "grid.bin"
        grid.dump(path)
        back = load(path)
        assert np.array_equal(back.increments, grid.increments)
        assert back.delta_base == grid.delta_base
        assert back.seed == grid.seed
        assert (back.particles, back.bm_dim, back.steps) == (3, 2, 8)

    def test_header_layout(self, tmp_path):
        grid = generate(7, particles=2, bm_dim=1, delta_base=0.5, horizon=1.0)
        path = tmp_path / "grid.bin"
        grid.dump(path)
        blob = path.read_bytes()
        assert blob[:4] == b"BGRD"
        version, particles, bm_dim, steps, delta, seed = struct.unpack(
            "<IQQQdQ", blob[4 : 4 + struct.calcsize("<IQQQdQ")]
        )
        assert (version, particles, bm_dim, steps) == (1, 2, 1, 2)
        assert delta == 0.5 and seed == 7

    def test_payload_particle_major(self, tmp_path):
        grid = generate(13, particles=2, bm_dim=1, delta_base=0.5, horizon=1.0)
        path = tmp_path / "grid.bin"
        grid.dump(path)
        blob = path.read_bytes()
        head = 4 + struct.calcsize("<IQQQdQ")
        payload = np.frombuffer(blob[head:], dtype="<f8")
        # particle 0 steps 0..1, then particle 1 steps 0..1
        expect = np.array(
            [
                grid.increment(0, 0)[0],
                grid.increment(0, 1)[0],
                grid.increment(1, 0)[0],
                grid.increment(1, 1)[0],
            ]
        )
        assert np.array_equal(payload, expect)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\0" * 64)
        with pytest.raises(GridError):
            load(path)
