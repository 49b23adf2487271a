"""L2 inner products and derivatives on the periodic grid t_j = j/m.

Every function accepts arrays of shape (..., m, 2) so stacks of curves
(geodesic waypoints, ensembles) are handled in one call.
"""
import numpy as np
from numpy.typing import NDArray


def grid(m: int) -> NDArray:
    return np.arange(m) / m


def inner(u: NDArray, v: NDArray) -> NDArray | float:
    """Periodic trapezoid rule for <<u, v>> = integral of <u(t), v(t)> dt."""
    m = u.shape[-2]
    return np.sum(u * v, axis=(-2, -1)) / m


def norm(u: NDArray) -> NDArray | float:
    return np.sqrt(np.maximum(inner(u, u), 0.0))


def pointwise_norm(u: NDArray) -> NDArray:
    return np.sqrt(np.sum(u * u, axis=-1))


def central_difference(points: NDArray) -> NDArray:
    """Derivative with respect to t on [0, 1) by central differences."""
    m = points.shape[-2]
    return (np.roll(points, -1, axis=-2) - np.roll(points, 1, axis=-2)) * (m / 2.0)


def closure_residual(q: NDArray) -> NDArray:
    """G(q) = integral of q(t)|q(t)| dt, the curve-space endpoint gap."""
    m = q.shape[-2]
    return np.sum(q * pointwise_norm(q)[..., None], axis=-2) / m


def cumulative_trapezoid(velocity: NDArray) -> NDArray:
    """Positions at t_0..t_m from velocities sampled at t_0..t_{m-1} (periodic)."""
    m = velocity.shape[-2]
    closed = np.concatenate([velocity, velocity[..., :1, :]], axis=-2)
    steps = 0.5 * (closed[..., 1:, :] + closed[..., :-1, :]) / m
    start = np.zeros(velocity.shape[:-2] + (1, 2))
    return np.concatenate([start, np.cumsum(steps, axis=-2)], axis=-2)


def periodic_interp(samples: NDArray, positions: NDArray) -> NDArray:
    """Linear interpolation of (m, 2) samples at real positions in grid units."""
    m = samples.shape[0]
    base = np.floor(positions).astype(int)
    frac = (positions - base)[:, None]
    lo = samples[np.mod(base, m)]
    hi = samples[np.mod(base + 1, m)]
    return lo + frac * (hi - lo)
