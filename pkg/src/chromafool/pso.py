"""Particle swarm minimization over the unit color-filter box.

Candidate filters are particle positions in [0, 1]^3.  The swarm follows
the standard constriction-style recurrence (inertia 0.729, cognitive and
social weights 1.49445) with per-axis velocity clamping; positions are
clipped back into the box.  Personal and global bests update only on
strict improvement, which makes stagnation detection well-defined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PsoConfig", "SwarmState", "PsoResult", "init_swarm", "step", "optimize"]

DIM = 3


@dataclass(frozen=True)
class PsoConfig:
    n_particles: int = 30
    max_iterations: int = 100
    inertia: float = 0.729
    cognitive: float = 1.49445
    social: float = 1.49445
    velocity_clamp: float = 0.5
    stagnation_limit: int = 10
    seed: int | None = None

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        for name in ("inertia", "cognitive", "social", "velocity_clamp"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.stagnation_limit < 1:
            raise ValueError("stagnation_limit must be >= 1")


class SwarmState:
    """Mutable swarm snapshot: positions, velocities, bests and counters."""

    def __init__(self, positions, velocities, pbest_pos, pbest_fit):
        self.positions = positions
        self.velocities = velocities
        self.pbest_positions = pbest_pos
        self.pbest_fitness = pbest_fit
        best = int(np.argmin(pbest_fit))
        self.gbest_position = pbest_pos[best].copy()
        self.gbest_fitness = float(pbest_fit[best])
        self.iteration = 0
        self.stagnation = 0
        self.evaluations = len(positions)

    @property
    def n_particles(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class PsoResult:
    best_position: np.ndarray
    best_fitness: float
    iterations: int
    evaluations: int


def _evaluate(fitness, positions) -> np.ndarray:
    """Serial fitness sweep in particle-index order; values must be finite."""
    out = np.empty(len(positions), dtype=np.float64)
    for i, pos in enumerate(positions):
        v = float(fitness(pos))
        if not np.isfinite(v):
            raise ValueError(f"fitness returned a non-finite value {v} at {pos}")
        out[i] = v
    return out


def init_swarm(config: PsoConfig, fitness, rng: np.random.Generator) -> SwarmState:
    """Uniform positions in the box, zero velocities, bests from evaluation."""
    positions = rng.uniform(0.0, 1.0, size=(config.n_particles, DIM))
    velocities = np.zeros_like(positions)
    fits = _evaluate(fitness, positions)
    return SwarmState(positions, velocities, positions.copy(), fits)


def step(state: SwarmState, fitness, config: PsoConfig,
         rng: np.random.Generator) -> SwarmState:
    """One synchronous swarm update.

    Velocities follow the inertia/cognitive/social recurrence with fresh
    per-axis uniforms, clamped per axis; positions are clipped to the box.
    Best-updates happen after every particle is evaluated, so the result
    does not depend on evaluation order.
    """
    n = state.n_particles
    u1 = rng.random((n, DIM))
    u2 = rng.random((n, DIM))
    vel = (config.inertia * state.velocities
           + config.cognitive * u1 * (state.pbest_positions - state.positions)
           + config.social * u2 * (state.gbest_position - state.positions))
    np.clip(vel, -config.velocity_clamp, config.velocity_clamp, out=vel)
    pos = np.clip(state.positions + vel, 0.0, 1.0)
    fits = _evaluate(fitness, pos)

    improved = fits < state.pbest_fitness
    state.positions = pos
    state.velocities = vel
    state.pbest_positions[improved] = pos[improved]
    state.pbest_fitness[improved] = fits[improved]

    best = int(np.argmin(state.pbest_fitness))
    if state.pbest_fitness[best] < state.gbest_fitness:
        state.gbest_fitness = float(state.pbest_fitness[best])
        state.gbest_position = state.pbest_positions[best].copy()
        state.stagnation = 0
    else:
        state.stagnation += 1

    state.iteration += 1
    state.evaluations += n
    return state


def optimize(config: PsoConfig, fitness, stop=None,
             rng: np.random.Generator | None = None) -> PsoResult:
    """Run init plus steps until a stop condition fires.

    Terminates when ``stop(state)`` is true, the global best has not strictly
    improved for ``stagnation_limit`` consecutive iterations, or
    ``max_iterations`` is reached.  Returns the best-so-far position and
    fitness along with iteration and evaluation counts.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    state = init_swarm(config, fitness, rng)
    if stop is None or not stop(state):
        while state.iteration < config.max_iterations:
            step(state, fitness, config, rng)
            if stop is not None and stop(state):
                break
            if state.stagnation >= config.stagnation_limit:
                break
    return PsoResult(
        best_position=state.gbest_position.copy(),
        best_fitness=state.gbest_fitness,
        iterations=state.iteration,
        evaluations=state.evaluations,
    )
