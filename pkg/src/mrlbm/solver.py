"""Time loops: the adaptive solver and its uniform-grid reference."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fields import FieldSet
from .lbm import SchemeSpec, Streamer, collide, reference_collide, reference_stream
from .multiresolution import PredictionConfig, adapt


@dataclass
class StepCounters:
    steps: int = 0
    adapt_calls: int = 0
    stream_calls: int = 0
    collide_calls: int = 0
    collided_rows: int = 0


class AdaptiveSolver:
    """Adapt, stream, collide (then the optional post-step) once per step.

    The state between steps is post-collision, so streaming always acts on
    ``f*``. Starting from equilibrium data this matches collide-then-stream.
    """

    def __init__(self, field: FieldSet, scheme: SchemeSpec, boundaries, eps: float, mu: int,
                 cfg: PredictionConfig = PredictionConfig(), post_step: Callable | None = None,
                 ghost_eval: str = "direct", adaptive: bool = True, use_tables: bool = True):
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        self.field, self.scheme, self.eps, self.mu, self.cfg = field, scheme, eps, mu, cfg
        self.post_step = post_step
        self.adaptive = adaptive
        self.streamer = Streamer(scheme, boundaries, cfg, ghost_eval=ghost_eval, use_tables=use_tables)
        self.dt = scheme.dt(field.tree.grid)
        self.step_index = 0
        self.counters = StepCounters()

    @property
    def time(self) -> float:
        return self.step_index * self.dt

    @property
    def tree(self):
        return self.field.tree

    def step(self) -> FieldSet:
        f = self.field
        if self.adaptive:
            f = adapt(f, self.eps, self.mu, self.scheme.velocities, self.cfg)
            self.counters.adapt_calls += 1
        f = self.streamer(f)
        self.counters.stream_calls += 1
        f = collide(f, self.scheme)
        self.counters.collide_calls += 1
        self.counters.collided_rows += f.tree.n_leaves
        if self.post_step is not None:
            f = self.post_step(f)
        self.field = f
        self.step_index += 1
        self.counters.steps += 1
        return f


class ReferenceSolver:
    """Uniform finest grid; state ``(*shape, q)`` kept post-collision."""

    def __init__(self, f: np.ndarray, scheme: SchemeSpec, boundaries, dt: float,
                 post_step: Callable | None = None):
        self.f, self.scheme, self.boundaries, self.dt = np.array(f, float), scheme, boundaries, dt
        self.post_step = post_step
        self.step_index = 0

    @property
    def time(self) -> float:
        return self.step_index * self.dt

    def step(self) -> np.ndarray:
        f = reference_stream(self.f, self.scheme, self.boundaries)
        f = reference_collide(f, self.scheme)
        if self.post_step is not None:
            f = self.post_step(f)
        self.f = f
        self.step_index += 1
        return f
