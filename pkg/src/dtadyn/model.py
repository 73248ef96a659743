"""The affinity network: graph, sequence, and descriptor encoders, a
bidirectional multi-head cross-attention block over the protein features,
multimodal fusion, and a fully connected regression head.

Layout conventions: feature vectors are rank-1 (d,), weight matrices are
(in, out) applied as row @ W, conv filters are (C_out, C_in, K).  One
architecture serves every ablation: the fusion variant, descriptor mask,
and dilation settings are all ModelConfig fields.

Checkpoint container (binary, little-endian), version 1:

    magic b"DTCK" | u32 version | str config_json
    u8 has_stats | f64 x4 descriptor mins | f64 x4 maxs   (if has_stats)
    u32 n_params | per param: str name | u32 ndim | u32 x ndim dims
                              | f64 x prod(dims) row-major values

    str = u32 byte length + UTF-8 bytes.  Loading validates every shape
    against the config.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import (
    ShapeMismatch,
    Tensor,
    add,
    concat,
    conv1d_dilated,
    dropout,
    embedding_lookup,
    global_max_pool,
    matmul,
    mse_loss,
    mul,
    outer_product3,
    relu,
    reshape,
    softmax_last,
    transpose,
)
from .protein import ProteinInput, VOCAB_SIZE
from .smiles import FEATURE_WIDTH, MolecularGraph

FUSION_VARIANTS = ("concat", "sum", "average", "hadamard", "tfn")

CHECKPOINT_MAGIC = b"DTCK"
CHECKPOINT_VERSION = 1

ModelParams = dict[str, Tensor]


class UnknownVariant(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """All architecture hyperparameters.

    Defaults mirror the standard training setup: embedding dimension 64,
    3 graph-conv layers, 4 attention heads, dropout 0.2, dilation rate 4.
    """

    embed_dim: int = 64
    gcn_layers: int = 3
    attention_heads: int = 4
    dropout_p: float = 0.2
    dilation_rate: int = 4
    conv_kernels: tuple[int, ...] = (7, 7, 7)
    conv_channels: tuple[int, ...] | None = None  # default (32, 64, embed_dim)
    seq_vocab: int = VOCAB_SIZE
    max_seq_len: int = 1000
    mlp_hidden: tuple[int, ...] = (32,)
    head_hidden: tuple[int, ...] = (512, 128)
    fusion_variant: str = "tfn"
    fusion_dim: int = 128
    attend_pre_pool: bool = True
    descriptor_mask: tuple[bool, bool, bool, bool] = (True, True, True, True)

    def __post_init__(self):
        if self.embed_dim < 1 or self.attention_heads < 1:
            raise ConfigError("embed_dim and attention_heads must be positive")
        if self.embed_dim % self.attention_heads:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by "
                f"attention_heads {self.attention_heads}"
            )
        if self.conv_channels is None:
            object.__setattr__(self, "conv_channels", (32, 64, self.embed_dim))
        if len(self.conv_channels) != len(self.conv_kernels):
            raise ConfigError("conv_channels and conv_kernels lengths differ")
        if self.conv_channels[-1] != self.embed_dim:
            raise ConfigError(
                f"last conv channel count {self.conv_channels[-1]} must equal "
                f"embed_dim {self.embed_dim}"
            )
        if self.fusion_variant not in FUSION_VARIANTS:
            raise UnknownVariant(
                f"fusion_variant {self.fusion_variant!r} not one of {FUSION_VARIANTS}"
            )
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.dilation_rate < 1 or self.gcn_layers < 1 or self.max_seq_len < 1:
            raise ConfigError("dilation_rate, gcn_layers, max_seq_len must be positive")
        if len(self.descriptor_mask) != 4:
            raise ConfigError("descriptor_mask must have 4 entries")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.attention_heads

    @property
    def dilations(self) -> tuple[int, ...]:
        # first conv layer never dilated; remaining layers use the rate
        return (1,) + (self.dilation_rate,) * (len(self.conv_kernels) - 1)

    @property
    def fused_width(self) -> int:
        """Width of the fused vector entering the head, per fusion variant."""
        if self.fusion_variant == "concat":
            return 3 * self.embed_dim
        if self.fusion_variant == "tfn":
            return self.fusion_dim
        return self.embed_dim

    def min_sequence_positions(self) -> int:
        """Smallest input length the conv stack accepts."""
        total = sum((k - 1) * d for k, d in zip(self.conv_kernels, self.dilations))
        return total + 1

    def as_dict(self) -> dict:
        d = asdict(self)
        for key, value in d.items():
            if isinstance(value, tuple):
                d[key] = list(value)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        kwargs = dict(d)
        for key in ("conv_kernels", "conv_channels", "mlp_hidden", "head_hidden",
                    "descriptor_mask"):
            if key in kwargs and kwargs[key] is not None:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Single source of truth for parameter names and shapes.

    Attention directions: "t2d" enriches the target vector with dynamics
    (queries from target), "d2t" enriches the dynamics vector with the
    sequence (queries from dynamics).
    """
    d = config.embed_dim
    dk = config.head_dim
    shapes: dict[str, tuple[int, ...]] = {}
    width = FEATURE_WIDTH
    for layer in range(config.gcn_layers):
        shapes[f"gcn.{layer}.weight"] = (width, d)
        width = d
    shapes["embed.table"] = (config.seq_vocab, d)
    c_in = d
    for layer, (c_out, k) in enumerate(zip(config.conv_channels, config.conv_kernels)):
        shapes[f"conv.{layer}.weight"] = (c_out, c_in, k)
        shapes[f"conv.{layer}.bias"] = (c_out,)
        c_in = c_out
    width = 4
    for layer, hidden in enumerate(tuple(config.mlp_hidden) + (d,)):
        shapes[f"mlp.{layer}.weight"] = (width, hidden)
        shapes[f"mlp.{layer}.bias"] = (1, hidden)
        width = hidden
    for direction in ("t2d", "d2t"):
        for head in range(config.attention_heads):
            for role in ("q", "k", "v"):
                shapes[f"attn.{direction}.{role}{head}"] = (d, dk)
        shapes[f"attn.{direction}.out"] = (d, d)
    if config.fusion_variant == "tfn":
        shapes["fuse.weight"] = ((d + 1) ** 3, config.fusion_dim)
        shapes["fuse.bias"] = (1, config.fusion_dim)
    width = config.fused_width
    for layer, hidden in enumerate(tuple(config.head_hidden) + (1,)):
        shapes[f"head.{layer}.weight"] = (width, hidden)
        shapes[f"head.{layer}.bias"] = (1, hidden)
        width = hidden
    return shapes


def _glorot_bound(shape: tuple[int, ...]) -> float:
    if len(shape) == 3:  # conv: (C_out, C_in, K)
        fan_in = shape[1] * shape[2]
        fan_out = shape[0] * shape[2]
    else:
        fan_in, fan_out = shape[0], shape[-1]
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_params(config: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """Seeded uniform Glorot for weights, zeros for biases."""
    params: ModelParams = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".bias") or name.endswith("bias"):
            arr = np.zeros(shape)
        else:
            bound = _glorot_bound(shape)
            arr = rng.uniform(-bound, bound, size=shape)
        params[name] = Tensor(arr, requires_grad=True)
    return params


def _linear(row: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return add(matmul(row, weight), bias)


def graph_encoder(graph: MolecularGraph, params: ModelParams,
                  config: ModelConfig) -> Tensor:
    """Stacked graph convolutions over the normalized adjacency, then a
    global max pool to one ligand vector."""
    if graph.norm_adjacency is None or graph.node_features is None:
        raise ValueError("graph not prepared; run featurize + normalize_adjacency")
    if graph.node_features.shape[1] != FEATURE_WIDTH:
        raise ShapeMismatch(
            f"node feature width {graph.node_features.shape[1]} != {FEATURE_WIDTH}"
        )
    adj = Tensor(graph.norm_adjacency)
    h = Tensor(graph.node_features)
    for layer in range(config.gcn_layers):
        h = relu(matmul(matmul(adj, h), params[f"gcn.{layer}.weight"]))
    return global_max_pool(h)


def sequence_encoder(ids: np.ndarray, params: ModelParams,
                     config: ModelConfig) -> tuple[Tensor, Tensor]:
    """Embedding followed by the dilated conv stack.

    Returns (pooled target vector (d,), pre-pool feature map (N_out, d));
    the feature map feeds position-level attention and the residue-weight
    export.
    """
    if len(ids) != config.max_seq_len:
        raise ShapeMismatch(
            f"sequence length {len(ids)} != configured max_seq_len "
            f"{config.max_seq_len}"
        )
    x = transpose(embedding_lookup(params["embed.table"], ids))  # (d, N)
    for layer, dilation in enumerate(config.dilations):
        x = relu(
            conv1d_dilated(
                x,
                params[f"conv.{layer}.weight"],
                params[f"conv.{layer}.bias"],
                dilation,
            )
        )
    feature_map = transpose(x)  # (N_out, d)
    return global_max_pool(feature_map), feature_map


def vector_encoder(vec4: np.ndarray, params: ModelParams,
                   config: ModelConfig) -> Tensor:
    """MLP from the normalized 4-descriptor vector to a d-dim embedding."""
    row = Tensor(np.asarray(vec4, dtype=np.float64).reshape(1, 4))
    n_layers = len(config.mlp_hidden) + 1
    for layer in range(n_layers):
        row = relu(_linear(row, params[f"mlp.{layer}.weight"],
                           params[f"mlp.{layer}.bias"]))
    return reshape(row, (config.embed_dim,))


def _attend(query_vec: Tensor, key_source: Tensor, direction: str,
            params: ModelParams, config: ModelConfig,
            weights_out: list[np.ndarray] | None) -> Tensor:
    """One attention direction: a single query vector over key/value rows.

    key_source is (n_keys, d); with a single pooled key the softmax weight
    is exactly 1 and the output is the value projection.
    """
    dk = config.head_dim
    scale = 1.0 / math.sqrt(dk)
    q_row = reshape(query_vec, (1, config.embed_dim))
    heads = []
    for head in range(config.attention_heads):
        q = matmul(q_row, params[f"attn.{direction}.q{head}"])       # (1, dk)
        k = matmul(key_source, params[f"attn.{direction}.k{head}"])  # (n, dk)
        v = matmul(key_source, params[f"attn.{direction}.v{head}"])  # (n, dk)
        scores = mul(matmul(q, transpose(k)), scale)                 # (1, n)
        attn = softmax_last(scores)
        if weights_out is not None:
            weights_out.append(attn.array.ravel().copy())
        heads.append(reshape(matmul(attn, v), (dk,)))
    merged = reshape(concat(heads), (1, config.embed_dim))
    return reshape(matmul(merged, params[f"attn.{direction}.out"]),
                   (config.embed_dim,))


def cross_attention(
    x_target: Tensor,
    x_dynamic: Tensor,
    seq_map: Tensor | None,
    params: ModelParams,
    config: ModelConfig,
    collect_weights: bool = False,
):
    """Bidirectional multi-head cross-attention between the pooled target
    vector and the dynamics vector.

    The target direction always attends over the single dynamics vector.
    With attend_pre_pool on, the dynamics direction attends over the
    sequence positions of seq_map instead of the pooled target vector.
    Returns (x_target', x_dynamic', weights) where weights maps direction
    name to an (H, n_keys) array, or None when not collected.
    """
    weights: dict[str, np.ndarray] | None = {} if collect_weights else None
    t2d_w: list[np.ndarray] | None = [] if collect_weights else None
    d2t_w: list[np.ndarray] | None = [] if collect_weights else None

    x_dyn_rows = reshape(x_dynamic, (1, config.embed_dim))
    x_t_prime = _attend(x_target, x_dyn_rows, "t2d", params, config, t2d_w)

    if config.attend_pre_pool and seq_map is not None:
        key_source = seq_map
    else:
        key_source = reshape(x_target, (1, config.embed_dim))
    x_d_prime = _attend(x_dynamic, key_source, "d2t", params, config, d2t_w)

    if weights is not None:
        weights["target_to_dynamic"] = np.stack(t2d_w)
        weights["dynamic_to_target"] = np.stack(d2t_w)
    return x_t_prime, x_d_prime, weights


def tfn_fuse(x_t: Tensor, x_d: Tensor, x_l: Tensor, params: ModelParams) -> Tensor:
    """Append a constant 1 to each modality, take the flat triple outer
    product, and map it through one affine layer."""
    one = Tensor([1.0])
    t1 = concat([x_t, one])
    d1 = concat([x_d, one])
    l1 = concat([x_l, one])
    flat = outer_product3(t1, d1, l1)
    row = reshape(flat, (1, flat.size))
    fused = _linear(row, params["fuse.weight"], params["fuse.bias"])
    return reshape(fused, (fused.size,))


def fuse_variant(x_t: Tensor, x_d: Tensor, x_l: Tensor, variant: str,
                 params: ModelParams) -> Tensor:
    if variant == "concat":
        return concat([x_t, x_d, x_l])
    if variant == "sum":
        return add(add(x_t, x_d), x_l)
    if variant == "average":
        return mul(add(add(x_t, x_d), x_l), 1.0 / 3.0)
    if variant == "hadamard":
        return mul(mul(x_t, x_d), x_l)
    if variant == "tfn":
        return tfn_fuse(x_t, x_d, x_l, params)
    raise UnknownVariant(f"fusion variant {variant!r} not one of {FUSION_VARIANTS}")


def _head(fused: Tensor, params: ModelParams, config: ModelConfig,
          training: bool, rng: np.random.Generator | None) -> Tensor:
    row = reshape(fused, (1, fused.size))
    n_hidden = len(config.head_hidden)
    for layer in range(n_hidden):
        row = relu(_linear(row, params[f"head.{layer}.weight"],
                           params[f"head.{layer}.bias"]))
        row = dropout(row, config.dropout_p, training, rng)
    row = _linear(row, params[f"head.{n_hidden}.weight"],
                  params[f"head.{n_hidden}.bias"])
    return reshape(row, (1,))


def forward(
    batch: list[tuple[MolecularGraph, ProteinInput]],
    params: ModelParams,
    config: ModelConfig,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    collect_attention: bool = False,
):
    """Predict one affinity per (graph, protein) pair.

    mode "train" activates dropout and requires rng; "eval" is
    deterministic.  Returns (predictions (M,), attention list or None).
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    training = mode == "train"
    if training and rng is None:
        raise ValueError("training mode needs a seeded rng for dropout")
    mask = np.array(config.descriptor_mask, dtype=np.float64)
    preds = []
    attention: list[dict[str, np.ndarray]] | None = [] if collect_attention else None
    for graph, pinput in batch:
        x_l = graph_encoder(graph, params, config)
        x_t, seq_map = sequence_encoder(pinput.sequence_ids, params, config)
        x_d = vector_encoder(pinput.descriptors * mask, params, config)
        x_t2, x_d2, weights = cross_attention(
            x_t, x_d, seq_map, params, config, collect_weights=collect_attention
        )
        fused = fuse_variant(x_t2, x_d2, x_l, config.fusion_variant, params)
        preds.append(_head(fused, params, config, training, rng))
        if attention is not None:
            attention.append(weights)
    return concat(preds), attention


def batch_loss(batch, targets: np.ndarray, params: ModelParams,
               config: ModelConfig, mode: str,
               rng: np.random.Generator | None = None) -> Tensor:
    preds, _ = forward(batch, params, config, mode=mode, rng=rng)
    return mse_loss(preds, Tensor(targets))


# ---------------------------------------------------------------------------
# checkpoint container


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def save_checkpoint(path, config: ModelConfig, params: ModelParams,
                    norm_stats=None) -> None:
    """Write config, optional normalization stats, and every parameter."""
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    parts.append(_pack_str(json.dumps(config.as_dict(), sort_keys=True)))
    if norm_stats is not None:
        parts.append(struct.pack("<B", 1))
        parts.append(struct.pack("<4d", *norm_stats.mins))
        parts.append(struct.pack("<4d", *norm_stats.maxs))
    else:
        parts.append(struct.pack("<B", 0))
    parts.append(struct.pack("<I", len(params)))
    for name, tensor in params.items():
        parts.append(_pack_str(name))
        parts.append(struct.pack("<I", tensor.array.ndim))
        parts.append(struct.pack(f"<{tensor.array.ndim}I", *tensor.array.shape))
        parts.append(np.ascontiguousarray(tensor.array, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path):
    """Read a checkpoint; validates parameter shapes against its config.

    Returns (config, params, norm_stats | None).
    """
    from .protein import NormalizationStats

    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    pos = 4
    (version,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: checkpoint version {version}, "
                         f"expected {CHECKPOINT_VERSION}")
    (n,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    config = ModelConfig.from_dict(json.loads(blob[pos : pos + n].decode()))
    pos += n
    (has_stats,) = struct.unpack_from("<B", blob, pos)
    pos += 1
    stats = None
    if has_stats:
        mins = struct.unpack_from("<4d", blob, pos)
        pos += 32
        maxs = struct.unpack_from("<4d", blob, pos)
        pos += 32
        stats = NormalizationStats(mins=mins, maxs=maxs)
    (n_params,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    expected = param_shapes(config)
    params: ModelParams = {}
    for _ in range(n_params):
        (n,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos : pos + n].decode()
        pos += n
        (ndim,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(shape)
        pos += 8 * count
        if name not in expected:
            raise ValueError(f"{path}: unexpected parameter {name!r}")
        if tuple(shape) != expected[name]:
            raise ValueError(
                f"{path}: parameter {name!r} has shape {tuple(shape)}, "
                f"config implies {expected[name]}"
            )
        params[name] = Tensor(arr.astype(np.float64), requires_grad=True)
    missing = set(expected) - set(params)
    if missing:
        raise ValueError(f"{path}: missing parameter(s): {sorted(missing)}")
    return config, params, stats
