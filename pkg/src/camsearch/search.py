"""Energy-budgeted search for the node that needs the fewest averaged pictures.

Node indices are 1-based throughout; energy models are indexed by position in
the node array (0-based), so conversions happen at the boundary helpers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.special import logsumexp
from scipy.stats import norm

from .errors import (
    EmptyExploredSet,
    InsufficientInitialEnergy,
    NoNewNodes,
    SafetyViolation,
    SpaceTooSmall,
)
from .imaging import NoiseField, NoiseTarget, estimate_sigma, field_sigma, picture_count, synth_image, synthetic_scene

PERPENDICULAR_TOL_DEG = 5.0
PERPENDICULAR_FALLBACK_DEG = 45.0
TIE = 1e-9
SAFETY_SLACK = 1e-12


@dataclass(frozen=True)
class SearchConfig:
    k_est: float = 5.0
    k_sd: float = 50.0
    e_bound0: float = 12.0
    e_threshold: float = 2.0
    seed: int = 1
    max_iterations: int = 1000

    def __post_init__(self):
        if self.k_est < 0 or self.k_sd < 0:
            raise ValueError("SearchConfig.k_est and k_sd must be >= 0")
        if not self.e_bound0 > 0:
            raise ValueError("SearchConfig.e_bound0 must be > 0")
        if self.e_threshold < 0:
            raise ValueError("SearchConfig.e_threshold must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("SearchConfig.max_iterations must be >= 1")


@dataclass(frozen=True)
class Environment:
    """The simulated world: noise field, reference scene and noise target."""

    field: NoiseField
    target: NoiseTarget
    frame_size: int = 128
    scene_rects: int = 6

    def scene(self, seed: int) -> np.ndarray:
        return synthetic_scene(self.frame_size, [seed, 0], n_rects=self.scene_rects)

    def measure(self, position, node_index: int, seed: int, scene: np.ndarray, shot: int = 0) -> int:
        """Single shot at ``position`` -> estimated sigma -> picture count."""
        frame = synth_image(self.field, position, scene, [seed, node_index, shot])
        return picture_count(estimate_sigma(frame), self.target)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    node_index: int
    position: tuple
    measured_count: int
    e_remaining: float
    newly_explored: bool
    terminated: bool
    initial: bool = False


@dataclass
class SearchState:
    positions: np.ndarray
    current: int
    e_remaining: float
    explored: dict = field(default_factory=dict)  # index -> measured count
    best: int | None = None
    trace: list = field(default_factory=list)
    terminated: bool = False

    def position(self, index: int) -> np.ndarray:
        return self.positions[index - 1]

    def explored_arrays(self):
        keys = np.fromiter(self.explored.keys(), dtype=int, count=len(self.explored))
        counts = np.fromiter(self.explored.values(), dtype=float, count=len(self.explored))
        return keys, self.positions[keys - 1], counts

    def record_explored(self, index: int, count: int) -> None:
        self.explored[index] = int(count)
        if self.best is None or (count, index) < (self.explored[self.best], self.best):
            self.best = index


@dataclass(frozen=True)
class RunResult:
    trace: list
    final_node: int
    final_count: int
    iterations: int
    e_remaining: float
    avg_new_distance: float
    explored: dict

    def summary(self) -> dict:
        return {
            "final_node": self.final_node,
            "final_count": self.final_count,
            "iterations": self.iterations,
            "e_remaining_ws": self.e_remaining,
            "explored_nodes": len(self.explored),
            "avg_new_distance_m": self.avg_new_distance,
        }


# initial nodes ----------------------------------------------------------------

def _best_pair(points: np.ndarray, idx: np.ndarray, axis=None, limit=None):
    """Max-distance pair among 1-based ``idx`` (ties: lowest index sum, then lowest first index).

    With ``axis`` given, only pairs whose connecting line makes an angle with
    ``axis`` whose |cos| is at most ``limit`` qualify.
    """
    idx = np.sort(np.asarray(idx, dtype=int))
    a, b = np.triu_indices(len(idx), k=1)
    diff = points[idx[b] - 1] - points[idx[a] - 1]
    dist = np.linalg.norm(diff, axis=1)
    ok = dist > 0
    if axis is not None:
        ok &= np.abs(diff @ axis) <= (limit + 1e-12) * dist
    if not ok.any():
        return None
    a, b, dist = idx[a[ok]], idx[b[ok]], dist[ok]
    near = dist >= dist.max() - TIE
    a, b = a[near], b[near]
    k = np.lexsort((a, a + b))[0]
    return int(a[k]), int(b[k])


def boundary_indices(points: np.ndarray) -> np.ndarray:
    """1-based indices of convex-hull vertices (all nodes if the hull is degenerate)."""
    try:
        return np.sort(ConvexHull(points).vertices) + 1
    except (QhullError, ValueError):
        return np.arange(1, len(points) + 1)


def initial_nodes(positions) -> tuple[int, int, int, int]:
    """Two far-apart pairs: the diameter pair, then the longest roughly perpendicular pair."""
    pts = np.asarray(positions, dtype=float)
    if len(pts) < 4:
        raise SpaceTooSmall(f"need at least 4 nodes, got {len(pts)}")
    first = _best_pair(pts, boundary_indices(pts))
    axis = pts[first[1] - 1] - pts[first[0] - 1]
    axis /= np.linalg.norm(axis)
    rest = np.setdiff1d(np.arange(1, len(pts) + 1), first)
    for tol in (PERPENDICULAR_TOL_DEG, PERPENDICULAR_FALLBACK_DEG):
        second = _best_pair(pts, rest, axis, math.sin(math.radians(tol)))
        if second is not None:
            return (*first, *second)
    raise SpaceTooSmall("no pair of nodes is close to perpendicular to the first pair")


def initial_tour(positions, nodes) -> list[int]:
    """Nearest-neighbour order over the four initial nodes, starting at the first pair's lower index."""
    pts = np.asarray(positions, dtype=float)
    start = min(nodes[0], nodes[1])
    order, left = [start], [n for n in nodes if n != start]
    while left:
        here = pts[order[-1] - 1]
        nxt = min(left, key=lambda n: (float(np.linalg.norm(pts[n - 1] - here)), n))
        order.append(nxt)
        left.remove(nxt)
    return order


# estimation -------------------------------------------------------------------

def estimate_counts(targets, explored_positions, explored_counts, k_est: float) -> np.ndarray:
    """Inverse-distance weighted picture counts for target positions.

    A target that coincides with an explored position returns that node's count.
    """
    tgt = np.atleast_2d(np.asarray(targets, dtype=float))
    ep = np.atleast_2d(np.asarray(explored_positions, dtype=float))
    counts = np.asarray(explored_counts, dtype=float)
    if len(counts) == 0:
        raise EmptyExploredSet("no explored node to estimate from")
    dist = np.linalg.norm(tgt[:, None, :] - ep[None, :, :], axis=2)
    out = np.empty(len(tgt))
    hit = dist.min(axis=1) == 0
    if hit.any():
        out[hit] = counts[np.argmin(dist[hit], axis=1)]
    if (~hit).any():
        logw = -k_est * np.log(dist[~hit])
        logw -= logsumexp(logw, axis=1, keepdims=True)
        out[~hit] = np.exp(logw) @ counts
    return out


def truncated_mean(mu, sigma, cap):
    """E[min(Z, cap)] for Z ~ Normal(mu, sigma); sigma = 0 gives min(mu, cap)."""
    shape = np.broadcast_shapes(np.shape(mu), np.shape(sigma), np.shape(cap))
    mu, sigma, cap = (np.array(x, dtype=float).ravel() for x in np.broadcast_arrays(mu, sigma, cap))
    out = np.minimum(mu, cap)
    pos = sigma > 0
    if pos.any():
        s = sigma[pos]
        z = (cap[pos] - mu[pos]) / s
        out[pos] = mu[pos] * norm.cdf(z) - s * norm.pdf(z) + cap[pos] * norm.sf(z)
    return out.reshape(shape) if shape else float(out[0])


def modified_estimate(targets, explored_positions, explored_counts, k_est, k_sd, n_exp_min):
    """Expected min(Z, n_exp_min) with Z centred on the weighted estimate and spread k_sd * nearest distance."""
    tgt = np.atleast_2d(np.asarray(targets, dtype=float))
    ep = np.atleast_2d(np.asarray(explored_positions, dtype=float))
    mu = estimate_counts(tgt, ep, explored_counts, k_est)
    ed_min = np.linalg.norm(tgt[:, None, :] - ep[None, :, :], axis=2).min(axis=1)
    return truncated_mean(mu, k_sd * ed_min, n_exp_min)


# explorable sets ------------------------------------------------------------------

def feasible_set(state: SearchState, energy) -> np.ndarray:
    """1-based indices whose move cost from the current node fits the remaining budget."""
    cost = energy.row(state.current - 1)
    ok = cost <= state.e_remaining
    ok[state.current - 1] = True
    return np.nonzero(ok)[0] + 1


def explorable_set(state: SearchState, e_threshold: float, energy) -> np.ndarray:
    """Feasible nodes from which the best explored node stays affordable.

    Above the threshold every such node qualifies; at or below it only explored
    nodes do, so the search exploits what it has found.
    """
    if state.best is None:
        raise EmptyExploredSet("explorable set needs at least one explored node")
    feas = feasible_set(state, energy)
    e1 = energy.row(state.current - 1)[feas - 1]
    e2 = energy.row(state.best - 1)[feas - 1]
    keep = e1 + e2 <= state.e_remaining
    keep |= feas == state.current
    out = feas[keep]
    if state.e_remaining <= e_threshold:
        out = np.array([i for i in out if i in state.explored], dtype=int)
    return out


def evaluate(state: SearchState, candidates, config: SearchConfig) -> np.ndarray:
    """Measured counts for explored candidates, modified estimates for the rest."""
    cand = np.asarray(candidates, dtype=int)
    values = np.empty(len(cand))
    known = np.array([c in state.explored for c in cand], dtype=bool)
    values[known] = [state.explored[c] for c in cand[known]]
    if (~known).any():
        _, ep, counts = state.explored_arrays()
        values[~known] = modified_estimate(
            state.positions[cand[~known] - 1], ep, counts, config.k_est, config.k_sd,
            state.explored[state.best],
        )
    return values


def select_next(state: SearchState, energy, config: SearchConfig) -> int:
    cand = explorable_set(state, config.e_threshold, energy)
    values = evaluate(state, cand, config)
    tied = cand[values == values.min()]
    here = state.position(state.current)
    return int(min(tied, key=lambda i: (float(np.linalg.norm(state.position(i) - here)), i)))


# main loop --------------------------------------------------------------------------

def _measure_current(state: SearchState, env: Environment, config: SearchConfig, scene) -> bool:
    if state.current in state.explored:
        return False
    count = env.measure(state.position(state.current), state.current, config.seed, scene)
    state.record_explored(state.current, count)
    return True


def _append(state, node, new, terminated, initial=False):
    state.trace.append(IterationRecord(
        iteration=len(state.trace) + 1,
        node_index=node,
        position=tuple(float(v) for v in state.position(node)),
        measured_count=state.explored[node],
        e_remaining=state.e_remaining,
        newly_explored=new,
        terminated=terminated,
        initial=initial,
    ))


def _move(state: SearchState, target: int, energy) -> None:
    cost = energy.cost(state.current - 1, target - 1)
    if cost > state.e_remaining + SAFETY_SLACK:
        raise SafetyViolation(f"move {state.current}->{target} costs {cost} > budget {state.e_remaining}")
    state.e_remaining = max(0.0, state.e_remaining - cost)
    state.current = target
    back = energy.cost(target - 1, state.best - 1)
    if back > state.e_remaining + SAFETY_SLACK:
        raise SafetyViolation(
            f"after moving to {target}, return to {state.best} costs {back} > budget {state.e_remaining}"
        )


def step(state: SearchState, env: Environment, energy, config: SearchConfig, scene,
         forced: int | None = None, initial: bool = False) -> SearchState:
    """Measure if new, pick the next node, move there (or stop) and log the iteration."""
    node = state.current
    new = _measure_current(state, env, config, scene)
    nxt = select_next(state, energy, config) if forced is None else forced
    if nxt == node:
        state.terminated = not initial
        _append(state, node, new, state.terminated, initial)
        return state
    _move(state, nxt, energy)
    _append(state, node, new, False, initial)
    return state


def check_initial_tour(order, energy, e_bound0: float) -> None:
    """The tour must leave enough budget to return to any visited node at every stop."""
    spent = 0.0
    for k in range(1, len(order)):
        spent += energy.cost(order[k - 1] - 1, order[k] - 1)
        back = max(energy.cost(order[k] - 1, order[j] - 1) for j in range(k))
        if spent + back > e_bound0:
            raise InsufficientInitialEnergy(
                f"initial tour {order} needs {spent:.4f} ws plus {back:.4f} ws reserve "
                f"at stop {k + 1}, budget is {e_bound0} ws"
            )


def run(positions, env: Environment, energy, config: SearchConfig) -> RunResult:
    pts = np.asarray(positions, dtype=float)
    order = initial_tour(pts, initial_nodes(pts))
    check_initial_tour(order, energy, config.e_bound0)
    scene = env.scene(config.seed)
    state = SearchState(positions=pts, current=order[0], e_remaining=float(config.e_bound0))

    for k, node in enumerate(order):
        nxt = order[k + 1] if k + 1 < len(order) else node
        step(state, env, energy, config, scene, forced=nxt, initial=True)

    regular = 0
    while not state.terminated and regular < config.max_iterations:
        step(state, env, energy, config, scene)
        regular += 1
    if not state.terminated:
        # out of iterations: fall back to the best node found so far
        if state.current != state.best:
            step(state, env, energy, config, scene, forced=state.best)
        state.terminated = True
        _append(state, state.current, False, True)

    try:
        avg = avg_new_distance(state.trace)
    except NoNewNodes:
        avg = float("nan")
    return RunResult(
        trace=state.trace,
        final_node=state.current,
        final_count=state.explored[state.current],
        iterations=len(state.trace),
        e_remaining=state.e_remaining,
        avg_new_distance=avg,
        explored=dict(state.explored),
    )


def avg_new_distance(trace) -> float:
    """Mean distance from each newly explored node to the nearest node explored before it.

    Nodes measured during the forced initial tour seed the explored set but are
    not counted as search decisions.
    """
    seen, dists = [], []
    for rec in trace:
        if not rec.newly_explored:
            continue
        p = np.asarray(rec.position)
        if not rec.initial and seen:
            dists.append(float(np.min(np.linalg.norm(np.asarray(seen) - p, axis=1))))
        seen.append(p)
    if not dists:
        raise NoNewNodes("trace has no newly explored node after initialization")
    return float(np.mean(dists))


def global_minimum_node(positions, fld: NoiseField) -> int:
    """Node with the lowest field sigma (exhaustive scan, lowest index on ties)."""
    return int(np.argmin(field_sigma(fld, np.asarray(positions, dtype=float)))) + 1


def distinct_explored(result: RunResult) -> int:
    return len(result.explored)
