"""Seeded random-path generators used by probes and property sweeps.

Same-time pairs share the grid by construction (the second path is the first
plus a bridge pinned to zero at the start), so sup-norm gaps between them are
meaningful.
"""

from __future__ import annotations

import numpy as np

from .pathspace import Path

__all__ = [
    "random_path",
    "random_pair",
    "bridge_pair",
    "path_cloud",
]


def random_path(rng: np.random.Generator, d: int, dt: float, t_index: int, scale: float = 1.0, start=None) -> Path:
    """Brownian-type random walk path with N(0, scale^2 dt) increments."""
    incs = rng.normal(0.0, scale * np.sqrt(dt), size=(d, t_index + 1))
    if start is None:
        incs[:, 0] = rng.normal(0.0, scale, size=d)
    else:
        incs[:, 0] = np.atleast_1d(start)
    return Path(np.cumsum(incs, axis=1), dt)


def random_pair(rng: np.random.Generator, d: int, dt: float, t_index: int, scale: float = 1.0) -> tuple[Path, Path]:
    """Two independent same-grid, same-time random paths."""
    return (
        random_path(rng, d, dt, t_index, scale),
        random_path(rng, d, dt, t_index, scale),
    )


def _bridge(rng: np.random.Generator, d: int, dt: float, t_index: int, scale: float) -> np.ndarray:
    # Brownian bridge pinned to zero at node 0, free at the end.
    incs = rng.normal(0.0, scale * np.sqrt(dt), size=(d, t_index + 1))
    incs[:, 0] = 0.0
    return np.cumsum(incs, axis=1)


def bridge_pair(
    rng: np.random.Generator, d: int, dt: float, t_index: int, scale: float = 1.0, gap_scale: float = 0.5
) -> tuple[Path, Path]:
    """A base path and a perturbation of it sharing the start value.

    The perturbation is a scaled bridge added to the base, so the pair shares
    its history scale and the gap is controlled by gap_scale.
    """
    base = random_path(rng, d, dt, t_index, scale)
    other = Path(base.values + _bridge(rng, d, dt, t_index, gap_scale), dt)
    return base, other


def path_cloud(
    rng: np.random.Generator,
    base: Path,
    max_t_index: int,
    n: int,
    scale: float = 1.0,
) -> list[Path]:
    """Seeded cloud over [t, T] x path-space surrogates around ``base``.

    Mixes continuations of the base path, bridge perturbations of it and
    fresh paths, at uniformly drawn later times. The base itself is included.
    """
    out = [base]
    k0 = base.t_index
    for i in range(n):
        k = int(rng.integers(k0, max_t_index + 1))
        kind = i % 3
        if kind == 0:
            # continuation of base by a random walk
            tail = rng.normal(0.0, scale * np.sqrt(base.dt), size=(base.d, k - k0)) if k > k0 else np.empty((base.d, 0))
            vals = np.concatenate([base.values, base.values[:, -1:] + np.cumsum(tail, axis=1)], axis=1)
            out.append(Path(vals, base.dt))
        elif kind == 1:
            # bumped copy of base, extended
            bumped = base.values + _bridge(rng, base.d, base.dt, k0, 0.5 * scale)
            if k > k0:
                tail = rng.normal(0.0, scale * np.sqrt(base.dt), size=(base.d, k - k0))
                bumped = np.concatenate([bumped, bumped[:, -1:] + np.cumsum(tail, axis=1)], axis=1)
            out.append(Path(bumped, base.dt))
        else:
            out.append(random_path(rng, base.d, base.dt, k, scale))
    return out
