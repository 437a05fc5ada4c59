"""Rectified-flow schedule, interpolation, loss, Euler sampling and inversion.

Time runs from t=0 (data) to t=1 (noise) with sigma_t = t. Sampling
integrates t: 1 -> 0 on a uniform grid; inversion walks the same grid the
other way and records attention keys/values at the first ``gate`` sampling
times so the two line up step for step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from stgn import numerics as nx
from stgn.denoiser import to_model
from stgn.numerics import NumericError, Tensor


class ConfigurationError(ValueError):
    pass


def sigma(t):
    """Linear noise schedule."""
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    return t


def unit_weight(t):
    return 1.0


@dataclass
class FlowSchedule:
    num_steps: int = 50
    sigma_fn: object = sigma
    weight_fn: object = unit_weight
    _grid: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.num_steps < 1:
            raise ConfigurationError(f"num_steps must be >= 1, got {self.num_steps}")

    def grid(self):
        """Sampling times t_s = 1 - s/N for s = 0..N (one shared, read-only array)."""
        if self._grid is None or len(self._grid) != self.num_steps + 1:
            g = 1.0 - np.arange(self.num_steps + 1) / self.num_steps
            g.setflags(write=False)
            self._grid = g
        return self._grid


@dataclass
class FlowState:
    x0: np.ndarray
    eps: np.ndarray
    t: np.ndarray  # scalar or (B,)
    xt: np.ndarray

    @property
    def target(self):
        return self.eps - self.x0


def _per_sample(t, ndim):
    t = np.asarray(t, dtype=np.float64)
    return t.reshape(t.shape + (1,) * (ndim - t.ndim)) if t.ndim else t


def interpolate(x0, eps, t, sigma_fn=sigma):
    """x_t = (1 - sigma_t) x0 + sigma_t eps; ``t`` may be per-sample."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise nx.DimensionError(f"x0 {x0.shape} and eps {eps.shape} differ")
    t_arr = np.asarray(t, dtype=np.float64)
    s = _per_sample(np.vectorize(sigma_fn, otypes=[float])(t_arr), x0.ndim)
    return FlowState(x0, eps, t_arr, (1.0 - s) * x0 + s * eps)


def cfm_loss(v_pred, state: FlowState, schedule: FlowSchedule = None):
    """omega_t * mean((v_pred - (eps - x0))^2); per-sample weights for batched t."""
    v_pred = v_pred if isinstance(v_pred, Tensor) else Tensor(v_pred)
    if v_pred.shape != state.x0.shape:
        raise nx.DimensionError(f"v_pred {v_pred.shape} does not match x0 {state.x0.shape}")
    weight_fn = schedule.weight_fn if schedule is not None else unit_weight
    w = _per_sample(np.vectorize(weight_fn, otypes=[float])(state.t), state.x0.ndim)
    diff = v_pred - state.target
    return nx.mean(diff * diff * w)


def predict_clean(xt, v, t, sigma_fn=sigma):
    """x0_hat = x_t - sigma_t v (exact for v = eps - x0)."""
    t_arr = np.asarray(t, dtype=np.float64)
    ndim = v.ndim if isinstance(v, Tensor) else np.ndim(v)
    s = _per_sample(np.vectorize(sigma_fn, otypes=[float])(t_arr), ndim)
    if isinstance(v, Tensor):
        return Tensor(np.asarray(xt, dtype=np.float64)) - v * s
    return np.asarray(xt, dtype=np.float64) - s * np.asarray(v)


def _composite(x, cond):
    if cond is None:
        return x
    m = cond.inpaint_mask[..., None]
    return m * x + (1.0 - m) * to_model(cond.concat_input)


def _check_finite(x, step):
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite state at step {step}")


def euler_sample(model, cond, schedule: FlowSchedule, rng=None, hooks=None, x1=None):
    """Integrate dx/dt = v from t=1 to 0 with uniform Euler steps.

    The start state is ``x1`` if given, else unit Gaussian noise drawn from
    ``rng``. Outside the inpainting mask the state is reset to the known
    canvas after every step. ``hooks.for_step(s)`` may supply a per-block
    self-attention override for step ``s``.
    """
    grid = schedule.grid()
    if x1 is None:
        shape = cond.concat_input.shape
        x1 = rng.normal(shape)
    x = _composite(np.array(x1, dtype=np.float64), cond)
    for s in range(schedule.num_steps):
        t, t_next = grid[s], grid[s + 1]
        hook = hooks.for_step(s, grid) if hooks is not None else None
        v, _ = model(x, t, cond, hook=hook)
        x = _composite(x - (t - t_next) * v, cond)
        _check_finite(x, s)
    return x


@dataclass
class CacheEntry:
    step: int
    t: float
    kv: list  # per layer (K, V) arrays (B, n, d)


@dataclass
class InversionCache:
    steps: list
    style_token_mask: np.ndarray | None
    steps_recorded: int
    grid: np.ndarray
    x1: np.ndarray  # inverted state at t = 1

    def entry(self, s, grid):
        if grid is not self.grid:
            raise ConfigurationError("sampling grid differs from the inversion grid")
        e = self.steps[s]
        if e.step != s or e.t != grid[s]:
            raise ConfigurationError(f"cache entry {e.step}@{e.t} consumed at step {s}@{grid[s]}")
        return e


def invert(model, x_ref, cond, schedule: FlowSchedule, gate: int, style_token_mask=None):
    """Integrate the reference from t=0 to 1 with the model's own velocity.

    Records every layer's (K, V) at the first ``gate`` sampling times
    t_s = 1 - s/N (s < gate), using the states reached on the way.
    """
    if gate > schedule.num_steps or gate < 0:
        raise ConfigurationError(f"gate {gate} outside [0, {schedule.num_steps}]")
    grid = schedule.grid()
    N = schedule.num_steps
    recorded = {}
    x = _composite(np.array(x_ref, dtype=np.float64), cond)
    for j in range(N):
        s = N - j  # sampling index whose time equals the current time
        t, t_next = grid[s], grid[s - 1]
        record = s < gate
        v, tr = model(x, t, cond, trace=record)
        if record:
            recorded[s] = CacheEntry(s, float(t), tr.kv())
        x = _composite(x + (t_next - t) * v, cond)
        _check_finite(x, j)
    if gate > 0:
        _, tr = model(x, grid[0], cond, trace=True)
        recorded[0] = CacheEntry(0, float(grid[0]), tr.kv())
    steps = [recorded[s] for s in range(gate)]
    return InversionCache(steps, style_token_mask, gate, grid, x)
