"""Batches of sampler states at a fixed forward time."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ParticlePopulation:
    """A batch of particle positions at one forward time.

    positions has shape (count, dim).  The seed identifies the RNG stream of
    the run that produced (or will evolve) the population, so that noise can
    be reconstructed per (seed, particle, step).
    """

    positions: np.ndarray
    forward_time: float
    seed: int

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.shape[0] < 1:
            raise ValueError("population must contain at least one particle")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "forward_time", float(self.forward_time))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.positions)))

    def at_time(self, forward_time: float, positions: np.ndarray) -> "ParticlePopulation":
        """Same stream, new state."""
        return ParticlePopulation(positions, forward_time, self.seed)


def write_population_csv(path, populations) -> None:
    """Dump populations as CSV rows: time, x1..xn, seed."""
    populations = list(populations)
    if not populations:
        raise ValueError("no populations to write")
    dim = populations[0].dim
    header = "time," + ",".join(f"x{i + 1}" for i in range(dim)) + ",seed"
    rows = []
    for pop in populations:
        block = np.column_stack(
            [
                np.full(pop.count, pop.forward_time),
                pop.positions,
                np.full(pop.count, pop.seed),
            ]
        )
        rows.append(block)
    np.savetxt(path, np.vstack(rows), delimiter=",", header=header, comments="")
