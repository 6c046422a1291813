"""Attention blocks: quantum (squared inner products through a pyramid
layer) and the classical scaled dot-product baseline.

The quantum score between unit vectors is (x_i . W x_j)^2 with W a
pyramid orthogonal layer; on hardware this is the qubit-0 excitation
probability of load(x_j) -> pyramid(W) -> reversed loader cascade of
x_i.  Scores already sit in [0, 1], so the softmax is taken over them
directly, without the classical 1/sqrt(d) temperature.  Tokens are
l2-normalized on entry (the loading circuits require unit vectors) and
the normalization is part of the differentiable graph.  Values go
through a second, independent pyramid layer applied to the normalized
tokens.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import loaders, qsim
from .ortho import (
    PyramidLayer,
    apply_layer,
    backward_columns,
    forward_columns_with_tape,
    layer_to_circuit,
)

_ZERO_NORM = 1e-12


@dataclass(frozen=True)
class AttentionParams:
    """The two pyramid layers of one quantum attention block."""

    w_qk: PyramidLayer
    w_v: PyramidLayer

    def __post_init__(self):
        if self.w_qk.n != self.w_v.n:
            raise ValueError("w_qk and w_v must share the token dimension")


def apply_dropout(
    x: np.ndarray, rate: float, training: bool, rng: np.random.Generator | None
) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout; returns (output, mask) with mask None in eval mode."""
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def softmax_rows(a: np.ndarray) -> np.ndarray:
    e = np.exp(a - a.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_rows_backward(softmax_out: np.ndarray, d_out: np.ndarray) -> np.ndarray:
    inner = np.sum(d_out * softmax_out, axis=-1, keepdims=True)
    return softmax_out * (d_out - inner)


def attention_coefficient(
    x_i: np.ndarray, x_j: np.ndarray, w: PyramidLayer
) -> float:
    """(x_i . W x_j)^2 for unit vectors; the squared-overlap score in [0, 1]."""
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    if x_i.shape != (w.n,) or x_j.shape != (w.n,):
        raise ValueError(f"vectors must have dim {w.n}")
    for name, v in (("x_i", x_i), ("x_j", x_j)):
        if abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise ValueError(f"{name} must be a unit vector")
    value = float(np.dot(x_i, apply_layer(w, x_j)) ** 2)
    return min(value, 1.0)


def build_coefficient_circuit(
    x_i: np.ndarray, x_j: np.ndarray, w: PyramidLayer
) -> qsim.Circuit:
    """The score circuit: load x_j, pyramid W, reversed cascade of x_i.

    The trailing X of the full adjoint loader is omitted: it would only
    move the overlap amplitude from |10...0> to |0...0>, and the score is
    read as the qubit-0 excitation probability.
    """
    prog_j = loaders.compute_loader_angles(np.asarray(x_j, dtype=float))
    prog_i = loaders.compute_loader_angles(np.asarray(x_i, dtype=float))
    gates = list(loaders.build_loader_circuit(prog_j).gates)
    gates += list(layer_to_circuit(w).gates)
    gates += loaders.adjoint_cascade_gates(prog_i)
    return qsim.Circuit(n_qubits=w.n, gates=tuple(gates))


def attention_coefficient_dense(
    x_i: np.ndarray, x_j: np.ndarray, w: PyramidLayer
) -> float:
    """Score evaluated by full statevector simulation of the circuit."""
    psi = qsim.run_dense(build_coefficient_circuit(x_i, x_j, w))
    return qsim.measure_qubit_one_prob(psi, 0)


def _normalize_tokens(tokens: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(tokens, axis=1)
    if np.any(norms < _ZERO_NORM):
        bad = int(np.argmin(norms))
        raise ValueError(
            f"token {bad} has zero norm; upstream embedding produced a dead token"
        )
    return tokens / norms[:, None], norms


def quantum_attention_forward(
    tokens: np.ndarray,
    params: AttentionParams,
    dropout_rate: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, dict]:
    """Forward pass; returns (output tokens, cache for backward)."""
    tokens = np.asarray(tokens, dtype=float)
    if tokens.ndim != 2 or tokens.shape[1] != params.w_qk.n:
        raise ValueError(
            f"tokens must be (S, {params.w_qk.n}), got {tokens.shape}"
        )
    if not np.all(np.isfinite(tokens)):
        raise ValueError("tokens contain non-finite entries")

    x, norms = _normalize_tokens(tokens)
    k, tape_qk = forward_columns_with_tape(params.w_qk, x.T)  # (D, S) = W_qk x_j
    p = x @ k  # p[i, j] = x_i . W_qk x_j
    scores = p**2
    att = softmax_rows(scores)
    att_d, mask = apply_dropout(att, dropout_rate, training, rng)
    v_t, tape_v = forward_columns_with_tape(params.w_v, x.T)  # (D, S) = W_v x_j
    out = att_d @ v_t.T
    cache = {
        "params": params,
        "x": x,
        "norms": norms,
        "k": k,
        "tape_qk": tape_qk,
        "p": p,
        "att": att,
        "mask": mask,
        "att_d": att_d,
        "v_t": v_t,
        "tape_v": tape_v,
    }
    return out, cache


def quantum_attention_backward(
    cache: dict, d_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (d tokens, d w_qk angles, d w_v angles) from d output."""
    params: AttentionParams = cache["params"]
    x, norms = cache["x"], cache["norms"]
    k, p, att = cache["k"], cache["p"], cache["att"]

    d_att_d = d_out @ cache["v_t"]
    d_vt = (cache["att_d"].T @ d_out).T  # (D, S)
    d_att = d_att_d if cache["mask"] is None else d_att_d * cache["mask"]
    d_scores = softmax_rows_backward(att, d_att)
    d_p = 2.0 * p * d_scores
    d_x = d_p @ k.T
    d_k = x.T @ d_p
    g_qk, d_xt = backward_columns(params.w_qk, cache["tape_qk"], d_k)
    d_x += d_xt.T
    g_v, d_xt = backward_columns(params.w_v, cache["tape_v"], d_vt)
    d_x += d_xt.T
    # x = t / |t|: project out the radial component, then rescale
    d_tokens = (d_x - x * np.sum(d_x * x, axis=1, keepdims=True)) / norms[:, None]
    return d_tokens, g_qk, g_v


def classical_attention_forward(
    tokens: np.ndarray,
    w_q: np.ndarray,
    w_k: np.ndarray,
    w_v: np.ndarray,
    dropout_rate: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, dict]:
    """softmax(Q K^T / sqrt(d)) V with per-token projections q = W_q t."""
    tokens = np.asarray(tokens, dtype=float)
    d = tokens.shape[1]
    for name, w in (("w_q", w_q), ("w_k", w_k), ("w_v", w_v)):
        if w.shape != (d, d):
            raise ValueError(f"{name} must be ({d}, {d}), got {w.shape}")
    q = tokens @ w_q.T
    k = tokens @ w_k.T
    v = tokens @ w_v.T
    scale = 1.0 / np.sqrt(d)
    scores = (q @ k.T) * scale
    att = softmax_rows(scores)
    att_d, mask = apply_dropout(att, dropout_rate, training, rng)
    out = att_d @ v
    cache = {
        "tokens": tokens,
        "w_q": w_q,
        "w_k": w_k,
        "w_v": w_v,
        "q": q,
        "k": k,
        "v": v,
        "scale": scale,
        "att": att,
        "mask": mask,
        "att_d": att_d,
    }
    return out, cache


def classical_attention_backward(
    cache: dict, d_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (d tokens, d w_q, d w_k, d w_v) from d output."""
    tokens = cache["tokens"]
    q, k, v = cache["q"], cache["k"], cache["v"]
    d_att_d = d_out @ v.T
    d_v = cache["att_d"].T @ d_out
    d_att = d_att_d if cache["mask"] is None else d_att_d * cache["mask"]
    d_scores = softmax_rows_backward(cache["att"], d_att) * cache["scale"]
    d_q = d_scores @ k
    d_k = d_scores.T @ q
    d_tokens = d_q @ cache["w_q"] + d_k @ cache["w_k"] + d_v @ cache["w_v"]
    g_q = d_q.T @ tokens
    g_k = d_k.T @ tokens
    g_v = d_v.T @ tokens
    return d_tokens, g_q, g_k, g_v
