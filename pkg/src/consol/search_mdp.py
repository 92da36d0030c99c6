"""MDP encoding of the structure search.

States count the directed paths from the network inputs into each neuron of
the current layer; an action is a flattened binary connection matrix for the
next stage, so the transition is the linear map s' = Mat(a)^T s.  Constraint
checking (fan-in caps, frozen paths, dead neurons) is pure and returns
rejection reasons as values.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ShapeError
from .local_net import MULTIPLICATION, SUMMATION, LocalStructure


@dataclass(frozen=True)
class StateVec:
    """Path counts per neuron, zero-padded to length n_s."""

    values: tuple[int, ...]
    stage: int

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)


def initial_state(n_inputs: int, n_s: int) -> StateVec:
    if n_inputs > n_s:
        raise ShapeError(f"n_inputs {n_inputs} exceeds state size {n_s}")
    return StateVec(tuple([1] * n_inputs + [0] * (n_s - n_inputs)), stage=0)


@dataclass(frozen=True)
class ActionVec:
    """Flattened connection matrix, zero-padded to length n_a.  Discrete
    actions are 0/1; the relaxed twin lives in [0,1]^{n_a}."""

    values: tuple[float, ...]

    @property
    def n_a(self) -> int:
        return len(self.values)

    @property
    def is_discrete(self) -> bool:
        return all(v in (0.0, 1.0) for v in self.values)

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)


def action_from_array(a) -> ActionVec:
    a = np.asarray(a, dtype=float)
    if a.ndim != 1:
        raise ShapeError("action must be a vector")
    if (a < 0).any() or (a > 1).any():
        raise ValueError("relaxed action entries must lie in [0, 1]")
    return ActionVec(tuple(float(v) for v in a))


def action_from_indicator(Z, n_a: int) -> ActionVec:
    Z = np.asarray(Z, dtype=float)
    flat = Z.ravel()
    if flat.size > n_a:
        raise ShapeError(f"indicator has {flat.size} entries > n_a={n_a}")
    return ActionVec(tuple(flat) + (0.0,) * (n_a - flat.size))


@dataclass(frozen=True)
class ConstraintConfig:
    """frozen_paths pins connections (stage, i, j) to 1; frozen_columns
    records target neurons whose whole incoming pattern is pinned, so a
    kept neuron can neither lose nor gain inputs across episodes."""

    max_factors_per_neuron: int = 3
    corr_keep_threshold: float = 0.99
    frozen_paths: frozenset[tuple[int, int, int]] = frozenset()
    frozen_columns: frozenset[tuple[int, int]] = frozenset()
    max_frozen_columns: int | None = None  # default: keep one free per output

    def frozen_rows(self, stage: int, j: int) -> set[int]:
        return {i for fs, i, jj in self.frozen_paths if fs == stage and jj == j}

    def __post_init__(self):
        if self.max_factors_per_neuron < 1:
            raise ValueError("max_factors_per_neuron must be >= 1")
        if not 0.0 < self.corr_keep_threshold <= 1.0:
            raise ValueError("corr_keep_threshold must be in (0, 1]")


@dataclass(frozen=True)
class Transition:
    s: StateVec
    a: ActionVec
    s_next: StateVec
    reward: float


def transition(s: StateVec, a: ActionVec, n_k: int, n_k1: int) -> StateVec:
    if n_k * n_k1 > a.n_a:
        raise ShapeError(f"{n_k}x{n_k1} block does not fit action size {a.n_a}")
    Mat = a.as_array()[: n_k * n_k1].reshape(n_k, n_k1)
    nxt = Mat.T @ s.as_array()[:n_k]
    n_s = len(s.values)
    padded = np.zeros(n_s)
    padded[:n_k1] = nxt
    return StateVec(tuple(int(round(v)) for v in padded), stage=s.stage + 1)


def indicator_from_action(a: ActionVec, n_k: int, n_k1: int) -> np.ndarray:
    if n_k * n_k1 > a.n_a:
        raise ShapeError(f"{n_k}x{n_k1} block does not fit action size {a.n_a}")
    return a.as_array()[: n_k * n_k1].reshape(n_k, n_k1)


def discretize(a: ActionVec) -> ActionVec:
    return ActionVec(tuple(1.0 if v >= 0.5 else 0.0 for v in a.values))


@dataclass(frozen=True)
class CheckResult:
    accepted: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.accepted


def check_constraints(s_prev: StateVec, a: ActionVec, cfg: ConstraintConfig,
                      stage: int, layer_kind: str, n_k: int, n_k1: int,
                      used_next: np.ndarray | None = None) -> CheckResult:
    """Static fan-in cap, frozen-path preservation, and dead-neuron checks.

    s_prev carries liveness of the source layer (a neuron with zero incoming
    paths computes nothing).  used_next optionally restricts which target
    neurons must stay alive; by default every summation output must.
    """
    Z = indicator_from_action(a, n_k, n_k1)
    fan_in = Z.sum(axis=0)
    if layer_kind in (MULTIPLICATION, SUMMATION):
        if (fan_in > cfg.max_factors_per_neuron).any():
            return CheckResult(False, "static")
    for fs, i, j in cfg.frozen_paths:
        if fs == stage and Z[i, j] == 0:
            return CheckResult(False, "frozen")
    for fs, j in cfg.frozen_columns:
        if fs == stage:
            keep = cfg.frozen_rows(stage, j)
            extra = set(np.flatnonzero(Z[:, j]).tolist()) - keep
            if extra:
                return CheckResult(False, "frozen")
    live_prev = s_prev.as_array()[:n_k] > 0
    selects_dead = ((Z > 0) & ~live_prev[:, None]).any(axis=0)
    live_sources = ((Z > 0) & live_prev[:, None]).sum(axis=0)
    if layer_kind == MULTIPLICATION and used_next is not None:
        # a product neuron that a fixed downstream stage consumes must
        # receive at least one live input
        if (used_next[:n_k1] & (live_sources == 0)).any():
            return CheckResult(False, "dead")
    if layer_kind == SUMMATION:
        must_live = np.ones(n_k1, dtype=bool) if used_next is None else used_next[:n_k1]
        if (must_live & (live_sources == 0)).any():
            return CheckResult(False, "dead")
        # wiring a dead neuron into an output is never meaningful
        if selects_dead.any():
            return CheckResult(False, "dead")
    if (selects_dead & (live_sources == 0) & (fan_in > 0)).any():
        return CheckResult(False, "dead")
    return CheckResult(True)


def propose_random_action(rng, n_k: int, n_k1: int, n_a: int,
                          cfg: ConstraintConfig, stage: int,
                          layer_kind: str,
                          s_prev: StateVec | None = None) -> ActionVec:
    """Draw a structured random discrete action: per target neuron a uniform
    fan-in (within the static cap, net of pinned connections) and uniform
    source choice among live previous-layer neurons.  Frozen columns get
    exactly their pinned pattern.  Constraint checking is the caller's job."""
    live = np.ones(n_k, dtype=bool)
    if s_prev is not None:
        live = s_prev.as_array()[:n_k] > 0
    Z = np.zeros((n_k, n_k1))
    for j in range(n_k1):
        if (stage, j) in cfg.frozen_columns:
            for i in cfg.frozen_rows(stage, j):
                Z[i, j] = 1.0
            continue
        pinned = sorted(cfg.frozen_rows(stage, j))
        for i in pinned:
            Z[i, j] = 1.0
        avail = [i for i in range(n_k) if live[i] and i not in pinned]
        cap = min(cfg.max_factors_per_neuron - len(pinned), len(avail))
        if cap <= 0:
            continue
        lo = 1 if (layer_kind == SUMMATION and not pinned) else 0
        m = int(rng.integers(lo, cap + 1))
        if m > 0:
            srcs = rng.choice(len(avail), size=m, replace=False)
            for s_i in srcs:
                Z[avail[s_i], j] = 1.0
    return action_from_indicator(Z, n_a)


def stage_pins(cfg: ConstraintConfig, stage: int, n_k: int, n_k1: int, n_a: int):
    """(mask, values) over the flat action vector: frozen connections pinned
    to 1, the rest of every frozen column pinned to 0."""
    mask = np.zeros(n_a, dtype=bool)
    values = np.zeros(n_a)
    for fs, j in cfg.frozen_columns:
        if fs == stage:
            for i in range(n_k):
                mask[i * n_k1 + j] = True
    for fs, i, j in cfg.frozen_paths:
        if fs == stage:
            mask[i * n_k1 + j] = True
            values[i * n_k1 + j] = 1.0
    return mask, values


def update_frozen_paths(cfg: ConstraintConfig, structure: LocalStructure,
                        layer_outputs: np.ndarray,
                        targets: np.ndarray) -> ConstraintConfig:
    """Freeze the input path of penultimate-layer neurons that correlate
    strongly with an output.  Per output only the single best correlate
    above the threshold is frozen (on narrow input ranges many monomials
    are near-collinear, so freezing everything above the threshold would
    exhaust the layer), and a budget always leaves free columns for
    further search.  Constant series are skipped."""
    layer_outputs = np.asarray(layer_outputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    if layer_outputs.shape[0] != targets.shape[0] or layer_outputs.shape[0] < 2:
        raise ShapeError("need matching series of length >= 2")
    feed_stage = len(structure.indicators) - 2
    out_stage = feed_stage + 1
    Z = structure.indicators[feed_stage]
    budget = cfg.max_frozen_columns
    if budget is None:
        budget = max(0, Z.shape[1] - targets.shape[1])
    frozen = set(cfg.frozen_paths)
    columns = set(cfg.frozen_columns)

    def corr_with(j: int, t: np.ndarray) -> float:
        series = layer_outputs[:, j]
        if Z[:, j].sum() == 0 or np.std(series) == 0.0:
            return -1.0
        return abs(float(np.corrcoef(series, t)[0, 1]))

    for out in range(targets.shape[1]):
        t = targets[:, out]
        if np.std(t) == 0.0:
            continue
        pins_for_out = {j for fs, j, oo in frozen
                        if fs == out_stage and oo == out}
        best_j, best_corr = None, cfg.corr_keep_threshold
        for j in range(layer_outputs.shape[1]):
            if j in pins_for_out:
                continue
            c = corr_with(j, t)
            if c > best_corr:
                best_j, best_corr = j, c
        if best_j is None:
            continue
        # pinned fan-in must stay below the static cap or every action
        # becomes infeasible; a strictly better correlate replaces the
        # currently worst kept neuron for this output
        if len(pins_for_out) >= cfg.max_factors_per_neuron - 1:
            scored = sorted((corr_with(j, t), j) for j in pins_for_out)
            worst_corr, worst_j = scored[0]
            if best_corr <= worst_corr:
                continue
            frozen.discard((out_stage, worst_j, out))
            if not any(fs == out_stage and j == worst_j
                       for fs, j, _ in frozen):
                columns.discard((feed_stage, worst_j))
                frozen = {p for p in frozen
                          if not (p[0] == feed_stage and p[2] == worst_j)}
        n_here = len([c for c in columns if c[0] == feed_stage])
        if (feed_stage, best_j) not in columns:
            if n_here >= budget:
                continue
            columns.add((feed_stage, best_j))
            for i in range(Z.shape[0]):
                if Z[i, best_j] == 1:
                    frozen.add((feed_stage, i, best_j))
        # a kept neuron stays wired to the output it tracks
        frozen.add((out_stage, best_j, out))
    if frozen == set(cfg.frozen_paths) and columns == set(cfg.frozen_columns):
        return cfg
    return replace(cfg, frozen_paths=frozenset(frozen),
                   frozen_columns=frozenset(columns))
