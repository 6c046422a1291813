"""The assembled transformer: patch embedding, encoder blocks with either
quantum or classical attention, and the auxiliary-feature classifier head.

Everything is plain float64 numpy with hand-written reverse-mode
gradients.  A forward pass returns the probability plus a trace holding
every intermediate needed for an exact backward pass; parameters live in
a flat name -> ndarray registry so optimizer state and checkpoints stay
trivial.

Architecture per block: pre-layer-norm -> attention -> dropout ->
residual -> pre-layer-norm -> FFN (hidden 2D, GELU, dropout) ->
residual.  Layer norm carries no learnable affine.  The head takes the
class token concatenated with the two auxiliary scalars through one
GELU hidden layer (with dropout) and a final affine + sigmoid.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from . import attention as attn
from .attention import apply_dropout
from .ortho import PyramidLayer

_LN_EPS = 1e-6
_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

ATTENTION_KINDS = ("quantum", "classical")


@dataclass(frozen=True)
class ModelConfig:
    image_size: int
    channels: int
    patch_size: int
    projection_dim: int
    n_blocks: int = 1
    n_heads: int = 1
    dropout_rate: float = 0.5
    attention_kind: str = "quantum"

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise ValueError("image_size must be divisible by patch_size")
        if self.projection_dim < 2:
            raise ValueError("projection_dim must be >= 2")
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")
        if self.n_heads != 1:
            raise ValueError("only a single attention head is supported")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.attention_kind not in ATTENTION_KINDS:
            raise ValueError(f"attention_kind must be one of {ATTENTION_KINDS}")

    @property
    def n_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def seq_len(self) -> int:
        return self.n_patches + 1

    @property
    def patch_dim(self) -> int:
        return self.patch_size**2 * self.channels


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * np.exp(-0.5 * x * x) * _INV_SQRT_2PI


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_out, fan_in))


def init_params(config: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Fresh parameter registry; draw order is fixed, so seeds reproduce."""
    d = config.projection_dim
    p: dict[str, np.ndarray] = {}
    p["embed.E"] = _glorot(rng, d, config.patch_dim)
    p["embed.pos"] = rng.normal(0.0, 0.02, size=(config.seq_len, d))
    p["embed.cls"] = rng.normal(0.0, 0.02, size=d)
    n_angles = d * (d - 1) // 2
    for b in range(config.n_blocks):
        if config.attention_kind == "quantum":
            p[f"block{b}.attn.w_qk"] = rng.normal(0.0, 0.1, size=n_angles)
            p[f"block{b}.attn.w_v"] = rng.normal(0.0, 0.1, size=n_angles)
        else:
            p[f"block{b}.attn.Wq"] = _glorot(rng, d, d)
            p[f"block{b}.attn.Wk"] = _glorot(rng, d, d)
            p[f"block{b}.attn.Wv"] = _glorot(rng, d, d)
        p[f"block{b}.ffn.W1"] = _glorot(rng, 2 * d, d)
        p[f"block{b}.ffn.b1"] = np.zeros(2 * d)
        p[f"block{b}.ffn.W2"] = _glorot(rng, d, 2 * d)
        p[f"block{b}.ffn.b2"] = np.zeros(d)
    p["head.W1"] = _glorot(rng, d, d + 2)
    p["head.b1"] = np.zeros(d)
    p["head.w2"] = _glorot(rng, 1, d)[0]
    p["head.b2"] = np.zeros(())
    return p


def zero_grads(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def extract_patches(image: np.ndarray, config: ModelConfig) -> np.ndarray:
    """(H, W, C) -> (N, P*P*C), patches scanned row-major, each flattened
    in (row, column, channel) order."""
    image = np.asarray(image, dtype=float)
    expected = (config.image_size, config.image_size, config.channels)
    if image.shape != expected:
        raise ValueError(f"image must have shape {expected}, got {image.shape}")
    g = config.image_size // config.patch_size
    p = config.patch_size
    grid = image.reshape(g, p, g, p, config.channels)
    return grid.transpose(0, 2, 1, 3, 4).reshape(config.n_patches, config.patch_dim)


def embed(
    patches: np.ndarray, params: dict[str, np.ndarray], config: ModelConfig
) -> np.ndarray:
    """Project patches, prepend the class token, add positional encodings."""
    if patches.shape != (config.n_patches, config.patch_dim):
        raise ValueError(
            f"patches must be ({config.n_patches}, {config.patch_dim}), "
            f"got {patches.shape}"
        )
    z = patches @ params["embed.E"].T
    tokens = np.vstack([params["embed.cls"][None, :], z])
    return tokens + params["embed.pos"]


def layer_norm(x: np.ndarray) -> tuple[np.ndarray, dict]:
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mu) * inv_std
    return xhat, {"xhat": xhat, "inv_std": inv_std}


def layer_norm_backward(cache: dict, d_out: np.ndarray) -> np.ndarray:
    xhat, inv_std = cache["xhat"], cache["inv_std"]
    m1 = d_out.mean(axis=-1, keepdims=True)
    m2 = (d_out * xhat).mean(axis=-1, keepdims=True)
    return inv_std * (d_out - m1 - xhat * m2)


def _block_params(params: dict, b: int, config: ModelConfig) -> dict:
    pre = f"block{b}."
    out = {k[len(pre):]: v for k, v in params.items() if k.startswith(pre)}
    if config.attention_kind == "quantum":
        d = config.projection_dim
        out["attn"] = attn.AttentionParams(
            w_qk=PyramidLayer(d, out["attn.w_qk"]),
            w_v=PyramidLayer(d, out["attn.w_v"]),
        )
    return out


def encoder_block_forward(
    tokens: np.ndarray,
    block: dict,
    config: ModelConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, dict]:
    rate = config.dropout_rate
    u1, ln1 = layer_norm(tokens)
    if config.attention_kind == "quantum":
        a, attn_cache = attn.quantum_attention_forward(
            u1, block["attn"], dropout_rate=rate, training=training, rng=rng
        )
    else:
        a, attn_cache = attn.classical_attention_forward(
            u1, block["attn.Wq"], block["attn.Wk"], block["attn.Wv"],
            dropout_rate=rate, training=training, rng=rng,
        )
    a_d, mask_a = apply_dropout(a, rate, training, rng)
    tok1 = tokens + a_d
    u2, ln2 = layer_norm(tok1)
    h = u2 @ block["ffn.W1"].T + block["ffn.b1"]
    g = gelu(h)
    g_d, mask_f = apply_dropout(g, rate, training, rng)
    f = g_d @ block["ffn.W2"].T + block["ffn.b2"]
    out = tok1 + f
    cache = {
        "block": block,
        "config": config,
        "ln1": ln1,
        "attn_cache": attn_cache,
        "mask_a": mask_a,
        "ln2": ln2,
        "u2": u2,
        "h": h,
        "g_d": g_d,
        "mask_f": mask_f,
    }
    return out, cache


def encoder_block_backward(
    cache: dict, d_out: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    block = cache["block"]
    config: ModelConfig = cache["config"]
    grads: dict[str, np.ndarray] = {}

    d_f = d_out
    grads["ffn.W2"] = d_f.T @ cache["g_d"]
    grads["ffn.b2"] = d_f.sum(axis=0)
    d_g_d = d_f @ block["ffn.W2"]
    d_g = d_g_d if cache["mask_f"] is None else d_g_d * cache["mask_f"]
    d_h = d_g * gelu_grad(cache["h"])
    grads["ffn.W1"] = d_h.T @ cache["u2"]
    grads["ffn.b1"] = d_h.sum(axis=0)
    d_u2 = d_h @ block["ffn.W1"]
    d_tok1 = d_out + layer_norm_backward(cache["ln2"], d_u2)

    d_a = d_tok1 if cache["mask_a"] is None else d_tok1 * cache["mask_a"]
    if config.attention_kind == "quantum":
        d_u1, g_qk, g_v = attn.quantum_attention_backward(cache["attn_cache"], d_a)
        grads["attn.w_qk"] = g_qk
        grads["attn.w_v"] = g_v
    else:
        d_u1, g_q, g_k, g_vm = attn.classical_attention_backward(
            cache["attn_cache"], d_a
        )
        grads["attn.Wq"] = g_q
        grads["attn.Wk"] = g_k
        grads["attn.Wv"] = g_vm
    d_tokens = d_tok1 + layer_norm_backward(cache["ln1"], d_u1)
    return d_tokens, grads


def classify_forward(
    z_cls: np.ndarray,
    m0: float,
    pt: float,
    params: dict,
    config: ModelConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict]:
    """Head MLP over [class token; m0; pT]; returns probability in (0, 1)."""
    if not (np.isfinite(m0) and np.isfinite(pt)):
        raise ValueError("auxiliary features must be finite")
    h = np.concatenate([z_cls, [m0, pt]])
    a1 = params["head.W1"] @ h + params["head.b1"]
    g1 = gelu(a1)
    g1_d, mask = apply_dropout(g1, config.dropout_rate, training, rng)
    logit = float(params["head.w2"] @ g1_d + params["head.b2"])
    prob = sigmoid(logit)
    cache = {"h": h, "a1": a1, "g1_d": g1_d, "mask": mask, "prob": prob}
    return prob, cache


def classify_backward(
    cache: dict, params: dict, d_prob: float
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    prob = cache["prob"]
    d_logit = d_prob * prob * (1.0 - prob)
    grads = {
        "head.w2": d_logit * cache["g1_d"],
        "head.b2": np.asarray(d_logit),
    }
    d_g1_d = d_logit * params["head.w2"]
    d_g1 = d_g1_d if cache["mask"] is None else d_g1_d * cache["mask"]
    d_a1 = d_g1 * gelu_grad(cache["a1"])
    grads["head.W1"] = np.outer(d_a1, cache["h"])
    grads["head.b1"] = d_a1
    d_h = params["head.W1"].T @ d_a1
    d_z_cls = d_h[:-2]
    return d_z_cls, grads


def model_forward(
    image: np.ndarray,
    m0: float,
    pt: float,
    params: dict[str, np.ndarray],
    config: ModelConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict]:
    """Full forward pass for one sample; returns (probability, trace)."""
    if training and rng is None and config.dropout_rate > 0.0:
        raise ValueError("training mode with dropout needs an rng")
    patches = extract_patches(image, config)
    tokens = embed(patches, params, config)
    block_caches = []
    for b in range(config.n_blocks):
        block = _block_params(params, b, config)
        tokens, cache = encoder_block_forward(tokens, block, config, training, rng)
        block_caches.append(cache)
    prob, head_cache = classify_forward(
        tokens[0], m0, pt, params, config, training, rng
    )
    trace = {
        "params": params,
        "config": config,
        "patches": patches,
        "block_caches": block_caches,
        "head_cache": head_cache,
        "seq_len": config.seq_len,
    }
    return prob, trace


def model_backward(trace: dict, d_prob: float) -> dict[str, np.ndarray]:
    """Gradients for every parameter from d loss / d probability."""
    params = trace["params"]
    config: ModelConfig = trace["config"]
    grads: dict[str, np.ndarray] = {}

    d_z_cls, head_grads = classify_backward(trace["head_cache"], params, d_prob)
    grads.update(head_grads)

    d_tokens = np.zeros((trace["seq_len"], config.projection_dim))
    d_tokens[0] = d_z_cls
    for b in range(config.n_blocks - 1, -1, -1):
        d_tokens, block_grads = encoder_block_backward(
            trace["block_caches"][b], d_tokens
        )
        grads.update({f"block{b}.{k}": v for k, v in block_grads.items()})

    grads["embed.pos"] = d_tokens
    grads["embed.cls"] = d_tokens[0].copy()
    grads["embed.E"] = d_tokens[1:].T @ trace["patches"]
    return grads


# ---------------------------------------------------------------------------
# checkpoints: text manifest (name, shape, byte offset) + one float64 blob


def save_checkpoint(params: dict[str, np.ndarray], directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    lines = []
    chunks = []
    offset = 0
    for name in params:
        # np.asarray, not ascontiguousarray: the latter promotes 0-d to 1-d
        arr = np.asarray(params[name], dtype="<f8")
        shape = "scalar" if arr.ndim == 0 else "x".join(str(d) for d in arr.shape)
        lines.append(f"{name} {shape} {offset}")
        raw = arr.tobytes()
        chunks.append(raw)
        offset += len(raw)
    with open(os.path.join(directory, "manifest"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.join(directory, "params.bin"), "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(directory: str) -> dict[str, np.ndarray]:
    manifest = os.path.join(directory, "manifest")
    blob_path = os.path.join(directory, "params.bin")
    if not os.path.isfile(manifest) or not os.path.isfile(blob_path):
        raise FileNotFoundError(f"no checkpoint at {directory}")
    with open(blob_path, "rb") as fh:
        blob = fh.read()
    params: dict[str, np.ndarray] = {}
    with open(manifest) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            name, shape_s, offset_s = line.rsplit(" ", 2)
            shape = () if shape_s == "scalar" else tuple(
                int(d) for d in shape_s.split("x")
            )
            count = int(np.prod(shape, dtype=int)) if shape else 1
            offset = int(offset_s)
            end = offset + 8 * count
            if end > len(blob):
                raise ValueError(
                    f"checkpoint blob truncated: {name} needs bytes up to {end}, "
                    f"blob has {len(blob)}"
                )
            arr = np.frombuffer(blob[offset:end], dtype="<f8").reshape(shape)
            params[name] = arr.astype(float)
    return params
