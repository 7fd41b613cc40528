"""Discretized path space: uniform-grid paths, sup norm, d-infinity metric,
and the two path surgeries (vertical endpoint bump, horizontal extension).

Paths live on a shared uniform grid; all surgeries are exact and no
interpolation is ever performed. A vertical bump mutates only the final
column, which is the discrete stand-in for the cadlag element obtained by
bumping a continuous path at its current time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PathError",
    "Path",
    "GridConfig",
    "sup_norm",
    "d_infty",
    "vertical_bump",
    "horizontal_extension",
    "restrict",
    "zero_like",
    "add_paths",
    "sub_paths",
]


class PathError(ValueError):
    """Invalid path construction or incompatible path pair."""


@dataclass(frozen=True, eq=False)
class Path:
    """A d-dimensional path sampled on the uniform grid 0, dt, ..., t_index*dt.

    ``values`` has shape (d, t_index + 1); column j is the path value at time
    j*dt. The array is copied on construction and frozen, so a Path is an
    immutable value safe to share across threads.
    """

    values: np.ndarray
    dt: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise PathError(f"values must be a (d, k+1) matrix, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise PathError("path values must be finite")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise PathError(f"dt must be a positive real, got {self.dt}")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "dt", float(self.dt))

    @classmethod
    def _wrap(cls, values: np.ndarray, dt: float) -> "Path":
        # Internal fast path: caller guarantees a finite, read-only float
        # (d, k+1) array that is never mutated afterwards.
        p = object.__new__(cls)
        object.__setattr__(p, "values", values)
        object.__setattr__(p, "dt", dt)
        return p

    @classmethod
    def constant(cls, value, t_index: int, dt: float) -> "Path":
        """Path holding ``value`` (scalar or d-vector) on 0..t_index."""
        x = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(np.tile(x[:, None], (1, t_index + 1)), dt)

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def t_index(self) -> int:
        return self.values.shape[1] - 1

    @property
    def t(self) -> float:
        """Current time t = t_index * dt."""
        return self.t_index * self.dt

    @property
    def endpoint(self) -> np.ndarray:
        """The current value gamma_t(t), as a fresh writable copy."""
        return self.values[:, -1].copy()

    def key(self) -> tuple:
        """Hashable identity (used for deterministic tie-breaks and memoization)."""
        return (self.t_index, self.values.tobytes())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Path):
            return NotImplemented
        return (
            self.dt == other.dt
            and self.values.shape == other.values.shape
            and bool(np.array_equal(self.values, other.values))
        )

    def __hash__(self) -> int:
        return hash((self.dt, self.values.shape, self.values.tobytes()))

    def __repr__(self) -> str:
        return f"Path(d={self.d}, t_index={self.t_index}, dt={self.dt}, end={self.values[:, -1]})"


@dataclass(frozen=True)
class GridConfig:
    """Uniform time grid on [0, horizon] with steps+1 nodes."""

    steps: int
    horizon: float
    dim: int = 1
    noise_dim: int = 1

    def __post_init__(self):
        if self.steps < 1:
            raise PathError(f"steps must be >= 1, got {self.steps}")
        if not self.horizon > 0:
            raise PathError(f"horizon must be > 0, got {self.horizon}")
        if self.dim < 1 or self.noise_dim < 1:
            raise PathError("dim and noise_dim must be >= 1")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps


def _check_comparable(p: Path, q: Path) -> None:
    if p.dt != q.dt:
        raise PathError(f"paths have different dt: {p.dt} vs {q.dt}")
    if p.d != q.d:
        raise PathError(f"paths have different dimension: {p.d} vs {q.d}")


def sup_norm(p: Path) -> float:
    """Sup over grid nodes of the Euclidean norm of the path value."""
    return float(np.sqrt((p.values**2).sum(axis=0)).max())


def _joint_gap(p: Path, q: Path) -> float:
    """Sup-norm gap after extending the shorter path by holding its last value."""
    kp, kq = p.t_index, q.t_index
    a, b = p.values, q.values
    if kp == kq:
        diff = a - b
    elif kp < kq:
        diff = np.empty_like(b)
        diff[:, : kp + 1] = a - b[:, : kp + 1]
        diff[:, kp + 1 :] = a[:, -1:] - b[:, kp + 1 :]
    else:
        diff = np.empty_like(a)
        diff[:, : kq + 1] = a[:, : kq + 1] - b
        diff[:, kq + 1 :] = a[:, kq + 1 :] - b[:, -1:]
    return float(np.sqrt((diff**2).sum(axis=0)).max())


def d_infty(p: Path, q: Path) -> float:
    """Time gap plus sup-norm gap over the joint grid (hold-last-value extension)."""
    _check_comparable(p, q)
    return abs(p.t_index - q.t_index) * p.dt + _joint_gap(p, q)


def vertical_bump(p: Path, x) -> Path:
    """Return the path equal to p except its final value is incremented by x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (p.d,):
        raise PathError(f"bump must be a vector of dim {p.d}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise PathError("bump must be finite")
    v = p.values.copy()
    v[:, -1] += x
    v.setflags(write=False)
    return Path._wrap(v, p.dt)


def horizontal_extension(p: Path, new_t_index: int) -> Path:
    """Extend p to new_t_index by holding its last value constant."""
    k = p.t_index
    if new_t_index < k:
        raise PathError(f"cannot extend to index {new_t_index} < current {k}")
    if new_t_index == k:
        return p
    v = np.empty((p.d, new_t_index + 1))
    v[:, : k + 1] = p.values
    v[:, k + 1 :] = p.values[:, -1:]
    v.setflags(write=False)
    return Path._wrap(v, p.dt)


def restrict(p: Path, new_t_index: int) -> Path:
    """Truncate p to the grid nodes 0..new_t_index."""
    if not 0 <= new_t_index <= p.t_index:
        raise PathError(f"restriction index {new_t_index} out of range [0, {p.t_index}]")
    if new_t_index == p.t_index:
        return p
    v = p.values[:, : new_t_index + 1]
    return Path._wrap(v, p.dt)


def zero_like(p: Path) -> Path:
    """The zero path sharing p's grid, dimension and time."""
    v = np.zeros_like(p.values)
    v.setflags(write=False)
    return Path._wrap(v, p.dt)


def add_paths(p: Path, q: Path) -> Path:
    """Pointwise sum of two equal-time paths."""
    _check_comparable(p, q)
    if p.t_index != q.t_index:
        raise PathError("pointwise sum needs equal times")
    v = p.values + q.values
    v.setflags(write=False)
    return Path._wrap(v, p.dt)


def sub_paths(p: Path, q: Path) -> Path:
    """Pointwise difference of two equal-time paths."""
    _check_comparable(p, q)
    if p.t_index != q.t_index:
        raise PathError("pointwise difference needs equal times")
    v = p.values - q.values
    v.setflags(write=False)
    return Path._wrap(v, p.dt)
