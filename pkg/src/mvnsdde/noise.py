"""Reproducible Brownian increment grids with lossless coarsening.

Increments are derived from a counter-based pseudo-random function so that
any entry is computable independently of generation order: particle ``a``
owns the Philox4x64 stream keyed ``[seed, a]``, raw 64-bit outputs are
consumed in flat ``step * bm_dim + component`` order, mapped to uniforms in
(0, 1), and pushed through the inverse normal CDF.  Coarse-step and
fine-step runs therefore share one Brownian path: summing blocks of fine
increments reproduces the coarse increments of the same path exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox
from scipy.special import ndtri

from .errors import GridError

_DUMP_MAGIC = b"BGRD"
_DUMP_VERSION = 1

# Particle streams use key=[seed, particle] with particle < 2**63; auxiliary
# streams (validation probes, sampling experiments) live in the high half so
# the two namespaces cannot collide.
_AUX_NAMESPACE = 1 << 63


def _uniforms(seed: int, particle: int, count: int) -> np.ndarray:
    """Uniform (0,1) variates ``0..count-1`` of one particle's stream."""
    n_raw = -(-count // 4) * 4  # Philox emits 4 raws per counter tick
    raw = Philox(counter=[0, 0, 0, 0], key=[seed, particle]).random_raw(n_raw)
    return (raw[:count] >> np.uint64(11)) * 2.0**-53 + 2.0**-54


def gaussian_block(
    seed: int, particle: int, steps: int, bm_dim: int, delta: float
) -> np.ndarray:
    """Increments (steps, bm_dim) for one particle, variance ``delta`` each."""
    u = _uniforms(seed, particle, steps * bm_dim)
    return (ndtri(u) * np.sqrt(delta)).reshape(steps, bm_dim)


def derived_generator(seed: int, tag: int) -> Generator:
    """Auxiliary RNG stream, disjoint from every particle stream."""
    return Generator(Philox(key=[seed, _AUX_NAMESPACE + tag]))


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise GridError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def _step_count(delta: float, horizon: float, what: str = "horizon") -> int:
    ratio = horizon / delta
    steps = int(round(ratio))
    if steps < 1 or abs(ratio - steps) > 1e-9 * max(1.0, abs(ratio)):
        raise GridError(
            f"{what}/delta = {ratio!r} is not a positive integer step count"
        )
    return steps


@dataclass(frozen=True)
class BrownianGrid:
    """Materialized per-particle, per-step Brownian increments.

    ``increments`` is stored time-major with shape
    ``(steps, particles, bm_dim)`` so the coupled particle loop reads one
    contiguous block per step; ``increment(a, n)`` and the binary dump expose
    the (particle, step, component) view.  Instances are immutable.
    """

    increments: np.ndarray
    delta_base: float
    steps: int
    particles: int
    bm_dim: int
    seed: int

    def __post_init__(self):
        self.increments.flags.writeable = False

    @property
    def horizon(self) -> float:
        return self.steps * self.delta_base

    def increment(self, particle: int, step: int) -> np.ndarray:
        """Increment vector of ``particle`` over step ``step``."""
        return self.increments[step, particle]

    def step_slice(self, step: int) -> np.ndarray:
        """All particles' increments for one step, shape (particles, bm_dim)."""
        return self.increments[step]

    def restrict(self, particles: int) -> "BrownianGrid":
        """Grid over the leading ``particles`` streams (shared-path prefix)."""
        if not 1 <= particles <= self.particles:
            raise GridError(
                f"cannot restrict {self.particles} particles to {particles}"
            )
        return BrownianGrid(
            increments=self.increments[:, :particles, :],
            delta_base=self.delta_base,
            steps=self.steps,
            particles=particles,
            bm_dim=self.bm_dim,
            seed=self.seed,
        )

    def coarsen(self, factor: int) -> "BrownianGrid":
        return coarsen(self, factor)

    def dump(self, path) -> None:
        """Write the binary dump (header + particle-major float64 payload)."""
        header = _DUMP_MAGIC + struct.pack(
            "<IQQQdQ",
            _DUMP_VERSION,
            self.particles,
            self.bm_dim,
            self.steps,
            self.delta_base,
            self.seed,
        )
        payload = np.ascontiguousarray(
            self.increments.transpose(1, 0, 2), dtype="<f8"
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload.tobytes())


def load(path) -> BrownianGrid:
    """Read a grid written by :meth:`BrownianGrid.dump`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    head_len = 4 + struct.calcsize("<IQQQdQ")
    if blob[:4] != _DUMP_MAGIC:
        raise GridError(f"bad magic in {path!r}")
    version, particles, bm_dim, steps, delta_base, seed = struct.unpack(
        "<IQQQdQ", blob[4:head_len]
    )
    if version != _DUMP_VERSION:
        raise GridError(f"unsupported dump version {version}")
    data = np.frombuffer(blob[head_len:], dtype="<f8").reshape(
        particles, steps, bm_dim
    )
    return BrownianGrid(
        increments=np.ascontiguousarray(data.transpose(1, 0, 2)),
        delta_base=float(delta_base),
        steps=int(steps),
        particles=int(particles),
        bm_dim=int(bm_dim),
        seed=int(seed),
    )


def generate(
    seed: int, particles: int, bm_dim: int, delta_base: float, horizon: float
) -> BrownianGrid:
    """Materialize a full increment grid.

    Each entry is N(0, delta_base) i.i.d.; entry (a, n, k) depends only on
    (seed, a, n, k), so regeneration with any particle count reproduces the
    shared streams bit-for-bit.
    """
    seed = _check_seed(seed)
    if particles < 1 or bm_dim < 1:
        raise GridError("particles and bm_dim must be >= 1")
    if delta_base <= 0:
        raise GridError(f"delta_base must be positive, got {delta_base}")
    steps = _step_count(delta_base, horizon)
    out = np.empty((steps, particles, bm_dim))
    for a in range(particles):
        out[:, a, :] = gaussian_block(seed, a, steps, bm_dim, delta_base)
    return BrownianGrid(
        increments=out,
        delta_base=float(delta_base),
        steps=steps,
        particles=int(particles),
        bm_dim=int(bm_dim),
        seed=seed,
    )


def coarsen(grid: BrownianGrid, factor: int) -> BrownianGrid:
    """Sum blocks of ``factor`` consecutive increments per particle.

    Block sums run left to right so repeated coarsening keeps a fixed
    floating-point evaluation order.  ``factor`` must divide ``grid.steps``.
    """
    factor = int(factor)
    if factor < 1:
        raise GridError(f"coarsening factor must be >= 1, got {factor}")
    if grid.steps % factor != 0:
        raise GridError(
            f"factor {factor} does not divide step count {grid.steps}"
        )
    if factor == 1:
        return grid
    blocks = grid.increments.reshape(
        grid.steps // factor, factor, grid.particles, grid.bm_dim
    )
    acc = blocks[:, 0].copy()
    for j in range(1, factor):
        acc += blocks[:, j]
    return BrownianGrid(
        increments=acc,
        delta_base=grid.delta_base * factor,
        steps=grid.steps // factor,
        particles=grid.particles,
        bm_dim=grid.bm_dim,
        seed=grid.seed,
    )
