"""Controlled path-dependent dynamics on two backends.

Monte Carlo Euler paths serve the statistical estimates (moment growth,
chain-rule residuals); an exact non-recombining tree whose noise increments
are +-sqrt(dt) per coordinate serves the identities (BSDE values, backward
semigroup nesting, dynamic programming). On the tree every conditional
expectation is a finite average, so the dynamic-programming residual is an
identity up to fixed-point tolerance.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .pathspace import (
    GridConfig,
    Path,
    PathError,
    _joint_gap,
    horizontal_extension,
    restrict,
    sup_norm,
)
from .sampling import bridge_pair

__all__ = [
    "CapacityError",
    "ContractError",
    "BlowupError",
    "ControlStrategy",
    "ControlProblem",
    "NoiseTree",
    "BsdeSolution",
    "simulate_psde",
    "simulate_tree",
    "solve_bsde_tree",
    "backward_semigroup",
    "cost",
    "value",
    "value_with_strategy",
    "ValueSolver",
    "dpp_check",
    "regularity_probe",
    "moment_probe",
]

DEFAULT_NODE_CAP = 2**18
FIXED_POINT_TOL = 1e-13
FIXED_POINT_MAX_ITER = 50


class CapacityError(RuntimeError):
    """Tree size would exceed the configured node cap."""


class ContractError(RuntimeError):
    """Fixed-point iteration for the implicit generator step diverged."""


class BlowupError(RuntimeError):
    """Simulation produced a non-finite state."""


@dataclass(frozen=True)
class ControlStrategy:
    """Open-loop control sequence or feedback map on the observed path.

    Open-loop entries are indexed by absolute grid index minus start_index;
    a feedback map sees only the path up to the current node, so it is
    adapted by construction.
    """

    open_loop: Optional[tuple] = None
    feedback: Optional[Callable[[Path], object]] = None
    start_index: int = 0

    def __post_init__(self):
        if (self.open_loop is None) == (self.feedback is None):
            raise PathError("exactly one of open_loop/feedback must be given")
        if self.open_loop is not None:
            object.__setattr__(self, "open_loop", tuple(self.open_loop))

    @staticmethod
    def constant(u) -> "ControlStrategy":
        return ControlStrategy(feedback=lambda path: u)

    def control_at(self, path: Path):
        if self.feedback is not None:
            return self.feedback(path)
        j = path.t_index - self.start_index
        if not 0 <= j < len(self.open_loop):
            raise PathError(f"open-loop sequence has no control for grid index {path.t_index}")
        return self.open_loop[j]


@dataclass(frozen=True)
class ControlProblem:
    """Coefficient bundle (b, sigma, q, phi, U) on a uniform grid.

    drift(path, u) -> (d,), diffusion(path, u) -> (d, n),
    generator(path, y, z, u) -> real with z an n-vector,
    terminal(path at final index) -> real.
    """

    drift: Callable[[Path, object], np.ndarray]
    diffusion: Callable[[Path, object], np.ndarray]
    generator: Callable[[Path, float, np.ndarray, object], float]
    terminal: Callable[[Path], float]
    controls: tuple
    grid: GridConfig

    def __post_init__(self):
        if len(self.controls) == 0:
            raise PathError("control set must be nonempty")
        object.__setattr__(self, "controls", tuple(self.controls))

    def lipschitz_probe(self, seed: int = 0, samples: int = 40) -> float:
        """Finite-difference Lipschitz estimate of (b, sigma, q) over random pairs.

        A sanity probe, not a certificate: the estimate L-hat should satisfy
        L-hat * dt < 0.5 for the implicit BSDE step to contract.
        """
        rng = np.random.default_rng(seed)
        g = self.grid
        est = 0.0
        for _ in range(samples):
            k = int(rng.integers(0, g.steps + 1))
            p, q = bridge_pair(rng, g.dim, g.dt, k)
            gap = _joint_gap(p, q)
            y = float(rng.normal())
            z = rng.normal(size=g.noise_dim)
            dy = float(rng.normal()) or 1.0
            dz = rng.normal(size=g.noise_dim)
            for u in self.controls:
                if gap > 0:
                    db = np.linalg.norm(
                        np.subtract(self.drift(p, u), self.drift(q, u), dtype=float)
                    )
                    ds = np.linalg.norm(
                        np.subtract(self.diffusion(p, u), self.diffusion(q, u), dtype=float)
                    )
                    dq = abs(self.generator(p, y, z, u) - self.generator(q, y, z, u))
                    est = max(est, db / gap, ds / gap, dq / gap)
                q0 = self.generator(p, y, z, u)
                est = max(est, abs(self.generator(p, y + dy, z, u) - q0) / abs(dy))
                nz = np.linalg.norm(dz)
                if nz > 0:
                    est = max(est, abs(self.generator(p, y, z + dz, u) - q0) / nz)
        return est


def _increments(noise_dim: int, dt: float) -> np.ndarray:
    """All 2^n per-step noise moves, each coordinate +-sqrt(dt)."""
    r = np.sqrt(dt)
    rows = list(itertools.product((r, -r), repeat=noise_dim))
    return np.asarray(rows)


@dataclass(frozen=True)
class NoiseTree:
    """Non-recombining tree of exact +-sqrt(dt) noise increments.

    ``levels[k]`` holds the full path values of every depth-k node as an
    array of shape (branching^k, d, root_cols + k); the snapshot states are
    the ones produced under the build strategy. Increments have exact mean 0
    and variance dt per coordinate.
    """

    root: Path
    depth: int
    noise_dim: int
    increments: np.ndarray
    levels: tuple

    @property
    def branching(self) -> int:
        return self.increments.shape[0]

    @property
    def n_leaves(self) -> int:
        return self.branching**self.depth

    @property
    def dt(self) -> float:
        return self.root.dt

    def node_path(self, level: int, j: int) -> Path:
        return Path._wrap(self.levels[level][j], self.root.dt)

    def leaf_paths(self) -> list[Path]:
        return [self.node_path(self.depth, j) for j in range(self.levels[-1].shape[0])]


def _check_cap(branching: int, depth: int, cap: int) -> None:
    if branching**depth > cap:
        raise CapacityError(
            f"tree with {branching}^{depth} leaves exceeds the node cap {cap}"
        )


def _build_levels(cp: ControlProblem, root: Path, depth: int, incs: np.ndarray, strategy: ControlStrategy):
    dt = root.dt
    b_count = incs.shape[0]
    first = root.values[None, :, :].copy()
    first.setflags(write=False)
    levels = [first]
    for k in range(depth):
        cur = levels[k]
        count, d, cols = cur.shape
        nxt = np.empty((count * b_count, d, cols + 1))
        for j in range(count):
            path = Path._wrap(cur[j], dt)
            u = strategy.control_at(path)
            bvec = np.atleast_1d(np.asarray(cp.drift(path, u), dtype=float))
            sig = np.atleast_2d(np.asarray(cp.diffusion(path, u), dtype=float))
            x = cur[j, :, -1]
            steps = x[None, :] + bvec[None, :] * dt + incs @ sig.T
            if not np.all(np.isfinite(steps)):
                raise BlowupError(f"non-finite state at tree level {k + 1}")
            rows = slice(j * b_count, (j + 1) * b_count)
            nxt[rows, :, :cols] = cur[j]
            nxt[rows, :, cols] = steps
        nxt.setflags(write=False)
        levels.append(nxt)
    return tuple(levels)


def simulate_tree(
    cp: ControlProblem,
    p0: Path,
    end_index: int,
    strategy: Optional[ControlStrategy] = None,
    cap: int = DEFAULT_NODE_CAP,
) -> NoiseTree:
    """Build the exact noise tree from p0 to end_index.

    States in the snapshot are produced under ``strategy`` (default: the
    constant first control); solvers rebuild states for the strategy they
    are handed, so the noise lattice is the only authoritative content.
    """
    if end_index < p0.t_index:
        raise PathError("end_index before the root time")
    depth = end_index - p0.t_index
    n = cp.grid.noise_dim
    _check_cap(2**n, depth, cap)
    if strategy is None:
        strategy = ControlStrategy.constant(cp.controls[0])
    incs = _increments(n, p0.dt)
    levels = _build_levels(cp, p0, depth, incs, strategy)
    return NoiseTree(root=p0, depth=depth, noise_dim=n, increments=incs, levels=levels)


@dataclass(frozen=True)
class BsdeSolution:
    """Per-node backward solution: y_levels[k] has shape (branching^k,),
    z_levels[k] has shape (branching^k, n) (zeros at the terminal layer)."""

    y_levels: tuple
    z_levels: tuple
    levels: tuple

    @property
    def root_value(self) -> float:
        return float(self.y_levels[0][0])


def _implicit_step(cp: ControlProblem, path: Path, e_y: float, z: np.ndarray, u, dt: float) -> float:
    # y = E[Y'] + q(path, y, z, u) dt, solved by fixed point; contraction
    # needs L*dt < 1 on the generator's y-slope.
    y = e_y
    for _ in range(FIXED_POINT_MAX_ITER):
        y_new = e_y + float(cp.generator(path, y, z, u)) * dt
        if not np.isfinite(y_new):
            raise ContractError("generator produced a non-finite value")
        if abs(y_new - y) <= FIXED_POINT_TOL * (1.0 + abs(y_new)):
            return y_new
        y = y_new
    raise ContractError("implicit generator step did not converge; check L*dt < 0.5")


def solve_bsde_tree(
    cp: ControlProblem,
    tree: NoiseTree,
    strategy: ControlStrategy,
    terminal=None,
) -> BsdeSolution:
    """Backward recursion Y_k = E[Y_{k+1}] + q(X_k, Y_k, Z_k, u_k) dt with
    Z_k = E[Y_{k+1} dW^T] / dt, states rebuilt under ``strategy``.

    ``terminal`` overrides cp.terminal; it may be a callable on leaf paths or
    a per-leaf array ordered by leaf index.
    """
    dt = tree.dt
    incs = tree.increments
    b_count = tree.branching
    levels = _build_levels(cp, tree.root, tree.depth, incs, strategy)
    leaves = levels[-1]
    if terminal is None:
        terminal = cp.terminal
    if callable(terminal):
        y = np.array([float(terminal(Path._wrap(leaves[j], dt))) for j in range(leaves.shape[0])])
    else:
        y = np.asarray(terminal, dtype=float)
        if y.shape != (leaves.shape[0],):
            raise PathError(f"terminal data must have one value per leaf ({leaves.shape[0]})")
    if not np.all(np.isfinite(y)):
        raise BlowupError("non-finite terminal data")
    y_levels: list = [None] * (tree.depth + 1)
    z_levels: list = [None] * (tree.depth + 1)
    y_levels[tree.depth] = y
    z_levels[tree.depth] = np.zeros((leaves.shape[0], tree.noise_dim))
    for k in range(tree.depth - 1, -1, -1):
        yc = y.reshape(-1, b_count)
        e = yc.mean(axis=1)
        z = yc @ incs / (b_count * dt)
        y_new = np.empty(e.shape[0])
        for j in range(e.shape[0]):
            path = Path._wrap(levels[k][j], dt)
            u = strategy.control_at(path)
            y_new[j] = _implicit_step(cp, path, float(e[j]), z[j], u, dt)
        y = y_new
        y_levels[k] = y
        z_levels[k] = z
    return BsdeSolution(y_levels=tuple(y_levels), z_levels=tuple(z_levels), levels=levels)


def backward_semigroup(
    cp: ControlProblem,
    p0: Path,
    strategy: ControlStrategy,
    delta_steps: int,
    eta,
    cap: int = DEFAULT_NODE_CAP,
) -> float:
    """Value at p0 of the BSDE over [t, t + delta] with terminal data eta."""
    tree = simulate_tree(cp, p0, p0.t_index + delta_steps, strategy, cap)
    return solve_bsde_tree(cp, tree, strategy, terminal=eta).root_value


def cost(cp: ControlProblem, p0: Path, strategy: ControlStrategy, cap: int = DEFAULT_NODE_CAP) -> float:
    """Root Y of the controlled BSDE over the full horizon."""
    tree = simulate_tree(cp, p0, cp.grid.steps, strategy, cap)
    return solve_bsde_tree(cp, tree, strategy).root_value


class ValueSolver:
    """Memoized per-node maximization over the finite control set.

    The recursion enumerates noise moves and controls from a state path;
    memoization on (grid index, path bytes) is sound because the future law
    depends on the past only through the path. ``best_control`` replays the
    memo and recomputes on a miss, which makes the recorded argmax strategy
    exact.
    """

    def __init__(self, cp: ControlProblem, end_index: int, terminal_fn: Callable[[Path], float], cap: int = DEFAULT_NODE_CAP):
        self.cp = cp
        self.end_index = end_index
        self.terminal_fn = terminal_fn
        self.cap = cap
        self.incs = _increments(cp.grid.noise_dim, cp.grid.dt)
        self.memo: dict = {}

    def solve(self, p0: Path) -> float:
        _check_cap(2 ** self.cp.grid.noise_dim, self.end_index - p0.t_index, self.cap)
        return self._rec(p0.values, p0.t_index)

    def best_control(self, path: Path):
        key = (path.t_index, path.values.tobytes())
        if key not in self.memo:
            self.solve(path)
        return self.memo[key][1]

    def _rec(self, vals: np.ndarray, k: int) -> float:
        if k == self.end_index:
            return float(self.terminal_fn(Path._wrap(vals, self.cp.grid.dt)))
        key = (k, vals.tobytes())
        hit = self.memo.get(key)
        if hit is not None:
            return hit[0]
        cp = self.cp
        dt = cp.grid.dt
        path = Path._wrap(vals, dt)
        x = vals[:, -1]
        b_count = self.incs.shape[0]
        best_y = -np.inf
        best_u = None
        for u in cp.controls:
            bvec = np.atleast_1d(np.asarray(cp.drift(path, u), dtype=float))
            sig = np.atleast_2d(np.asarray(cp.diffusion(path, u), dtype=float))
            steps = x[None, :] + bvec[None, :] * dt + self.incs @ sig.T
            if not np.all(np.isfinite(steps)):
                raise BlowupError(f"non-finite state at grid index {k + 1}")
            ys = np.empty(b_count)
            for c in range(b_count):
                child = np.concatenate([vals, steps[c][:, None]], axis=1)
                child.setflags(write=False)
                ys[c] = self._rec(child, k + 1)
            e_y = float(ys.mean())
            z = ys @ self.incs / (b_count * dt)
            y = _implicit_step(cp, path, e_y, z, u, dt)
            if y > best_y:
                best_y = y
                best_u = u
        self.memo[key] = (best_y, best_u)
        return best_y


def value(cp: ControlProblem, p0: Path, cap: int = DEFAULT_NODE_CAP) -> float:
    """Supremum of the BSDE cost over adapted controls, exact on the tree."""
    return ValueSolver(cp, cp.grid.steps, cp.terminal, cap).solve(p0)


def value_with_strategy(cp: ControlProblem, p0: Path, cap: int = DEFAULT_NODE_CAP):
    """Value plus the argmax feedback strategy that attains it."""
    solver = ValueSolver(cp, cp.grid.steps, cp.terminal, cap)
    v = solver.solve(p0)
    return v, ControlStrategy(feedback=solver.best_control)


def dpp_check(cp: ControlProblem, p0: Path, delta_steps: int, cap: int = DEFAULT_NODE_CAP) -> float:
    """|V(p0) - sup_u G_{t,t+delta}[V at t+delta]| on the exact tree."""
    mid = p0.t_index + delta_steps
    if mid > cp.grid.steps:
        raise PathError("delta_steps passes the horizon")
    v_direct = value(cp, p0, cap)
    inner = ValueSolver(cp, cp.grid.steps, cp.terminal, cap)
    outer = ValueSolver(cp, mid, lambda path: inner.solve(path), cap)
    return abs(v_direct - outer.solve(p0))


def simulate_psde(
    cp: ControlProblem,
    p0: Path,
    strategy: ControlStrategy,
    end_index: int,
    seed: int,
) -> Path:
    """Euler-Maruyama path of the controlled dynamics, extending p0."""
    if end_index < p0.t_index:
        raise PathError("end_index before the start of the path")
    rng = np.random.default_rng(seed)
    dt = p0.dt
    sqdt = np.sqrt(dt)
    vals = np.empty((p0.d, end_index + 1))
    vals[:, : p0.t_index + 1] = p0.values
    for k in range(p0.t_index, end_index):
        view = vals[:, : k + 1]
        view.setflags(write=False)
        path = Path._wrap(view, dt) if k > p0.t_index else p0
        u = strategy.control_at(path)
        bvec = np.atleast_1d(np.asarray(cp.drift(path, u), dtype=float))
        sig = np.atleast_2d(np.asarray(cp.diffusion(path, u), dtype=float))
        dw = rng.normal(0.0, sqdt, size=sig.shape[1])
        vals[:, k + 1] = vals[:, k] + bvec * dt + sig @ dw
        if not np.all(np.isfinite(vals[:, k + 1])):
            raise BlowupError(f"state blew up at step {k + 1}")
    vals.setflags(write=False)
    return Path._wrap(vals, dt)


def regularity_probe(cp: ControlProblem, samples: int, seed: int, cap: int = DEFAULT_NODE_CAP):
    """(lipschitz_ratio, time_ratio) of the value functional over random probes.

    lipschitz_ratio: sup |V(p) - V(p')| / ||p - p'||_0 over same-time pairs;
    time_ratio: sup |V(p) - V(ext)| / ((1 + ||p||_0) sqrt(t' - t)) where ext
    holds the last value to a later time.
    """
    rng = np.random.default_rng(seed)
    g = cp.grid
    lip = 0.0
    tim = 0.0
    for _ in range(samples):
        k = int(rng.integers(0, g.steps))
        p, q = bridge_pair(rng, g.dim, g.dt, k)
        vp = value(cp, p, cap)
        gap = _joint_gap(p, q)
        if gap > 0:
            lip = max(lip, abs(vp - value(cp, q, cap)) / gap)
        k2 = int(rng.integers(k + 1, g.steps + 1))
        ext = horizontal_extension(p, k2)
        denom = (1.0 + sup_norm(p)) * np.sqrt((k2 - k) * g.dt)
        tim = max(tim, abs(vp - value(cp, ext, cap)) / denom)
    return lip, tim


def moment_probe(
    cp: ControlProblem,
    p0: Path,
    strategy: ControlStrategy,
    n_paths: int,
    seed: int,
    p: int = 2,
):
    """Monte Carlo moment constants for the controlled state.

    Returns (growth_c, continuity_c):
    growth_c fits E ||X_T||_0^p <= C (1 + ||gamma_t||_0^p);
    continuity_c fits E ||X_r - gamma_t||_0^p <= C (1 + ||gamma_t||_0^p) (r-t)^{p/2}
    as the max of the ratio over intermediate times r.
    """
    g = cp.grid
    n_steps = g.steps - p0.t_index
    base = 1.0 + sup_norm(p0) ** p
    sums_gap = np.zeros(n_steps)
    sum_end = 0.0
    for i in range(n_paths):
        x = simulate_psde(cp, p0, strategy, g.steps, seed + i)
        sum_end += sup_norm(x) ** p
        for j in range(1, n_steps + 1):
            xr = restrict(x, p0.t_index + j)
            sums_gap[j - 1] += _joint_gap(xr, p0) ** p
    growth_c = (sum_end / n_paths) / base
    ratios = [
        (sums_gap[j - 1] / n_paths) / (base * ((j * g.dt) ** (p / 2)))
        for j in range(1, n_steps + 1)
    ]
    return growth_c, max(ratios)
