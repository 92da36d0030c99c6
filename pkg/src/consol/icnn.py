"""Fully input-convex neural networks.

Passthrough weights are clamped nonnegative after every update and the
activation is softplus, so the scalar output is convex in the whole input
vector by construction.  Minimization over the unit box uses projected
gradient descent with an adaptive step; restart agreement doubles as a
convexity check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class IcnnParams:
    """wy: input-injection matrices (one per hidden layer plus output);
    wz: nonnegative passthrough matrices; b: biases."""

    wy: tuple[np.ndarray, ...]
    wz: tuple[np.ndarray, ...]
    b: tuple[np.ndarray, ...]

    @property
    def d_in(self) -> int:
        return self.wy[0].shape[0]

    def copy(self) -> "IcnnParams":
        return IcnnParams(tuple(w.copy() for w in self.wy),
                          tuple(w.copy() for w in self.wz),
                          tuple(v.copy() for v in self.b))

    def min_wz(self) -> float:
        return float(min(w.min() for w in self.wz))


def init_icnn(d_in: int, widths=(16, 16), seed: int = 0) -> IcnnParams:
    rng = np.random.default_rng(seed)
    widths = tuple(widths)
    wy = [rng.normal(0.0, 0.1, (d_in, widths[0]))]
    wz = []
    b = [np.zeros(widths[0])]
    for prev, cur in zip(widths, widths[1:] + (1,)):
        wz.append(np.abs(rng.normal(0.0, 0.1, (prev, cur))))
        wy.append(rng.normal(0.0, 0.1, (d_in, cur)))
        b.append(np.zeros(cur))
    return IcnnParams(tuple(wy), tuple(wz), tuple(b))


def _forward_cached(params: IcnnParams, U: np.ndarray):
    zs, sigs = [], []
    a = U @ params.wy[0] + params.b[0]
    zs.append(_softplus(a))
    sigs.append(_sigmoid(a))
    n_hidden = len(params.wz)
    for k in range(1, n_hidden):
        a = zs[-1] @ params.wz[k - 1] + U @ params.wy[k] + params.b[k]
        zs.append(_softplus(a))
        sigs.append(_sigmoid(a))
    out = zs[-1] @ params.wz[-1] + U @ params.wy[-1] + params.b[-1]
    return out[:, 0], zs, sigs


def icnn_forward(params: IcnnParams, s, a=None) -> float | np.ndarray:
    """Scalar network value; accepts a single concatenated input, separate
    (state, action) parts, or a batch of rows."""
    u = np.asarray(s, dtype=float)
    if a is not None:
        u = np.concatenate([u, np.asarray(a, dtype=float)], axis=-1)
    single = u.ndim == 1
    U = u[None, :] if single else u
    if U.shape[1] != params.d_in:
        raise ShapeError(f"input dim {U.shape[1]} != network dim {params.d_in}")
    vals, _, _ = _forward_cached(params, U)
    return float(vals[0]) if single else vals


def icnn_value_and_input_grad(params: IcnnParams, U: np.ndarray):
    """Batched value f(u) and gradient df/du."""
    U = np.asarray(U, dtype=float)
    vals, zs, sigs = _forward_cached(params, U)
    n_hidden = len(params.wz)
    # backprop to the input
    dz = np.tile(params.wz[-1][:, 0], (U.shape[0], 1))
    g = np.tile(params.wy[-1][:, 0], (U.shape[0], 1))
    for k in range(n_hidden - 1, -1, -1):
        da = dz * sigs[k]  # (B, w_k)
        g = g + da @ params.wy[k].T
        if k > 0:
            dz = da @ params.wz[k - 1].T
    return vals, g


def icnn_fit(params: IcnnParams, U, targets, lr: float, epochs: int,
             batch_size: int, rng=None) -> IcnnParams:
    """Minibatch SGD on mean-squared error; passthrough weights are clamped
    to >= 0 after every step.  Returns a new parameter snapshot."""
    U = np.asarray(U, dtype=float)
    t = np.asarray(targets, dtype=float).ravel()
    if U.shape[0] == 0:
        raise ValueError("no training samples")
    p = params.copy()
    wy = [w for w in p.wy]
    wz = [w for w in p.wz]
    b = [v for v in p.b]
    n = U.shape[0]
    n_hidden = len(wz)
    for _ in range(epochs):
        order = rng.permutation(n) if rng is not None else np.arange(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            Ub, tb = U[idx], t[idx]
            vals, zs, sigs = _forward_cached(IcnnParams(tuple(wy), tuple(wz), tuple(b)), Ub)
            r = (2.0 / len(idx)) * (vals - tb)  # d MSE / d out
            # output layer
            g_wz = [None] * n_hidden
            g_wy = [None] * (n_hidden + 1)
            g_b = [None] * (n_hidden + 1)
            g_wz[-1] = zs[-1].T @ r[:, None]
            g_wy[-1] = Ub.T @ r[:, None]
            g_b[-1] = np.array([r.sum()])
            dz = np.outer(r, wz[-1][:, 0])
            for k in range(n_hidden - 1, -1, -1):
                da = dz * sigs[k]
                g_wy[k] = Ub.T @ da
                g_b[k] = da.sum(axis=0)
                if k > 0:
                    g_wz[k - 1] = zs[k - 1].T @ da
                    dz = da @ wz[k - 1].T
            for k in range(n_hidden + 1):
                wy[k] = wy[k] - lr * g_wy[k]
                b[k] = b[k] - lr * g_b[k]
            for k in range(n_hidden):
                wz[k] = np.maximum(wz[k] - lr * g_wz[k], 0.0)
    return IcnnParams(tuple(wy), tuple(wz), tuple(b))


def _kkt_residual(a, g, lo=0.0, hi=1.0, free_mask=None):
    r = g.copy()
    at_lo = a <= lo + 1e-12
    at_hi = a >= hi - 1e-12
    r[at_lo] = np.minimum(g[at_lo], 0.0)
    r[at_hi] = np.maximum(g[at_hi], 0.0)
    if free_mask is not None:
        r = r * free_mask
    return r


def minimize_over_box_batch(params: IcnnParams, S: np.ndarray, n_a: int,
                            steps: int = 200, a0: np.ndarray | None = None,
                            pin_mask: np.ndarray | None = None,
                            pin_values: np.ndarray | None = None,
                            tol: float = 1e-7):
    """Projected gradient descent on a |-> f(s, a) over [0,1]^{n_a}, run for
    a whole batch of states at once.  pin_mask marks coordinates held at
    pin_values (constraint-frozen connections and their column complements)."""
    S = np.asarray(S, dtype=float)
    B = S.shape[0]
    a = np.full((B, n_a), 0.5) if a0 is None else np.array(a0, dtype=float)
    if pin_mask is None:
        free = np.ones((B, n_a))
    else:
        free = 1.0 - pin_mask.astype(float)
        a = np.where(pin_mask, pin_values, a)
    step = np.full(B, 0.25)
    U = np.concatenate([S, a], axis=1)
    vals, g_full = icnn_value_and_input_grad(params, U)
    for _ in range(steps):
        g = g_full[:, S.shape[1]:] * free
        res = _kkt_residual(a, g, free_mask=free)
        if np.abs(res).max() <= tol:
            break
        cand = np.clip(a - step[:, None] * g, 0.0, 1.0)
        if pin_mask is not None:
            cand = np.where(pin_mask, pin_values, cand)
        cand_vals, cand_g = icnn_value_and_input_grad(
            params, np.concatenate([S, cand], axis=1))
        accept = cand_vals <= vals
        a = np.where(accept[:, None], cand, a)
        vals = np.where(accept, cand_vals, vals)
        g_full = np.where(accept[:, None], cand_g, g_full)
        step = np.where(accept, step * 1.2, step * 0.5)
    return a, vals


def minimize_over_box(params: IcnnParams, s, n_a: int, restarts: int = 3,
                      steps: int = 300, rng=None, pins=None,
                      tol: float = 1e-7):
    """Best projected-gradient result across restarts; with a convex
    objective all restarts agree to within tolerance.  pins is an optional
    (mask, values) pair of coordinates held fixed."""
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    s = np.asarray(s, dtype=float)
    rng = rng if rng is not None else np.random.default_rng(0)
    pin_mask = pin_values = None
    if pins is not None:
        pin_mask = np.asarray(pins[0], dtype=bool).reshape(1, n_a)
        pin_values = np.asarray(pins[1], dtype=float).reshape(1, n_a)
    best_a, best_val = None, np.inf
    for r in range(restarts):
        a0 = np.full((1, n_a), 0.5) if r == 0 else rng.uniform(0.0, 1.0, (1, n_a))
        a, val = minimize_over_box_batch(params, s[None, :], n_a, steps=steps,
                                         a0=a0, pin_mask=pin_mask,
                                         pin_values=pin_values, tol=tol)
        if val[0] < best_val:
            best_a, best_val = a[0], float(val[0])
    return best_a, best_val


def params_to_json_obj(params: IcnnParams):
    def mats(ws):
        return [{"shape": list(w.shape), "data": w.ravel().tolist()} for w in ws]
    return {"wy": mats(params.wy), "wz": mats(params.wz), "b": mats(params.b)}


def params_from_json_obj(obj) -> IcnnParams:
    def mats(entries):
        return tuple(np.array(e["data"], dtype=float).reshape(e["shape"]) for e in entries)
    return IcnnParams(mats(obj["wy"]), mats(obj["wz"]), mats(obj["b"]))
