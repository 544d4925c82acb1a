"""A tiny transformer encoder with LoRA adapters on attention projections.

The base weights (embeddings, attention and feed-forward projections, layer
norms) are randomly initialized and then frozen, playing the role of a
pre-trained backbone. Only the LoRA A/B matrices and the task heads (tagger,
arc scorer, dependency-label scorer) are trainable. All forward and backward
passes are hand-written in float64 numpy so gradients can be validated
against central differences.

Pre-norm blocks:  x += Attn(LN1(x));  x += FFN(LN2(x)).
Arc scoring:      score(i, j) = dep(h_i) . headrep(j), where column 0 is a
                  learned ROOT vector and column j >= 1 is head(h_{j-1});
                  the self-head column is masked to -inf.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .lora import AdaptedLinear, LoraAdapter, lora_backward, lora_forward, lora_init
from .numerics import Matrix, SeededRng, cross_entropy, softmax_rows

MODEL_CHECKPOINT_VERSION = 1
_LN_EPS = 1e-5
_NEG_INF = -1e30


@dataclass
class ModelConfig:
    vocab_size: int
    n_tags: int
    n_deprels: int
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    max_len: int = 64
    d_ff: int = 128
    lora_rank: int = 4
    lora_alpha: float = 8.0
    adapted_projections: tuple[str, ...] = ("query", "value")

    def validate(self) -> None:
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not 1 <= self.lora_rank < self.d_model:
            raise ConfigError(f"lora_rank {self.lora_rank} not in [1, d_model)")
        if self.vocab_size < 1 or self.n_tags < 1 or self.n_deprels < 1:
            raise ConfigError("vocab_size, n_tags, n_deprels must be positive")
        bad = set(self.adapted_projections) - {"query", "value"}
        if bad:
            raise ConfigError(f"unknown adapted projections {sorted(bad)}")


class Model:
    """frozen: name -> array (never touched by training);
    adapters: projection name -> AdaptedLinear (A/B trainable, W frozen);
    heads: name -> array (trainable)."""

    def __init__(self, config: ModelConfig, frozen, adapters, heads):
        self.config = config
        self.frozen: dict[str, np.ndarray] = frozen
        self.adapters: dict[str, AdaptedLinear] = adapters
        self.heads: dict[str, np.ndarray] = heads

    def trainable_params(self) -> dict[str, np.ndarray]:
        params = {}
        for name, layer in self.adapters.items():
            params[f"{name}.A"] = layer.adapter.A
            params[f"{name}.B"] = layer.adapter.B
        params.update(self.heads)
        return params

    def trainable_count(self) -> int:
        return sum(p.size for p in self.trainable_params().values())


def build_model(config: ModelConfig, rng: SeededRng) -> Model:
    config.validate()
    d, ff = config.d_model, config.d_ff
    frozen: dict[str, np.ndarray] = {}
    adapters: dict[str, AdaptedLinear] = {}

    frozen["tok_emb"] = rng.normal(config.vocab_size, d, std=1.0)
    frozen["pos_emb"] = rng.normal(config.max_len, d, std=1.0)
    proj_std = 1.0 / math.sqrt(d)
    for li in range(config.n_layers):
        for proj in ("query", "key", "value", "output"):
            w = rng.normal(d, d, std=proj_std)
            if proj in config.adapted_projections:
                adapters[f"L{li}.{proj}"] = AdaptedLinear(
                    W=w,
                    adapter=lora_init(d, d, config.lora_rank, config.lora_alpha, rng),
                )
            else:
                frozen[f"L{li}.{proj}"] = w
        frozen[f"L{li}.ln1_g"] = np.ones(d)
        frozen[f"L{li}.ln1_b"] = np.zeros(d)
        frozen[f"L{li}.ln2_g"] = np.ones(d)
        frozen[f"L{li}.ln2_b"] = np.zeros(d)
        frozen[f"L{li}.W1"] = rng.normal(ff, d, std=math.sqrt(2.0 / d))
        frozen[f"L{li}.W2"] = rng.normal(d, ff, std=1.0 / math.sqrt(ff))

    heads = {
        "tag_head": rng.normal(config.n_tags, d, std=proj_std),
        "arc_head_map": rng.normal(d, d, std=proj_std),
        "arc_dep_map": rng.normal(d, d, std=proj_std),
        "arc_root": rng.normal_vec(d, std=1.0),
        "label_head": rng.normal(config.n_deprels, 2 * d, std=1.0 / math.sqrt(2 * d)),
    }
    for arr in frozen.values():
        arr.setflags(write=False)
    for layer in adapters.values():
        layer.W.setflags(write=False)
    return Model(config, frozen, adapters, heads)


# --- forward ------------------------------------------------------------


def _layer_norm(x: Matrix, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mu) * inv_std
    return g * xhat + b, (xhat, inv_std, g)


def _layer_norm_backward(dy: Matrix, cache) -> Matrix:
    xhat, inv_std, g = cache
    dxhat = dy * g
    return inv_std * (
        dxhat
        - dxhat.mean(axis=1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
    )


def _split_heads(x: Matrix, n_heads: int) -> np.ndarray:
    n, d = x.shape
    return x.reshape(n, n_heads, d // n_heads).transpose(1, 0, 2)  # (H, n, dh)


def _merge_heads(x: np.ndarray) -> Matrix:
    h, n, dh = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * dh)


def _proj_forward(model: Model, name: str, x: Matrix) -> Matrix:
    if name in model.adapters:
        return lora_forward(model.adapters[name], x)
    return x @ model.frozen[name].T


def _proj_backward(model: Model, name: str, x: Matrix, upstream: Matrix, grads: dict) -> Matrix:
    if name in model.adapters:
        dx, ga, gb = lora_backward(model.adapters[name], x, upstream)
        grads[f"{name}.A"] = grads.get(f"{name}.A", 0) + ga
        grads[f"{name}.B"] = grads.get(f"{name}.B", 0) + gb
        return dx
    return upstream @ model.frozen[name]


def encode_with_cache(model: Model, token_ids) -> tuple[Matrix, list]:
    cfg = model.config
    ids = np.asarray(token_ids, dtype=np.int64)
    n = len(ids)
    if n == 0 or n > cfg.max_len:
        raise DataError(f"sentence length {n} not in [1, max_len={cfg.max_len}]")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise IndexError(f"token id out of range for vocab of {cfg.vocab_size}")
    x = model.frozen["tok_emb"][ids] + model.frozen["pos_emb"][:n]
    caches = []
    inv_sqrt_dh = 1.0 / math.sqrt(cfg.d_model // cfg.n_heads)
    for li in range(cfg.n_layers):
        n1, ln1_cache = _layer_norm(x, model.frozen[f"L{li}.ln1_g"], model.frozen[f"L{li}.ln1_b"])
        q = _proj_forward(model, f"L{li}.query", n1)
        k = _proj_forward(model, f"L{li}.key", n1)
        v = _proj_forward(model, f"L{li}.value", n1)
        qh = _split_heads(q, cfg.n_heads)
        kh = _split_heads(k, cfg.n_heads)
        vh = _split_heads(v, cfg.n_heads)
        scores = np.einsum("hid,hjd->hij", qh, kh) * inv_sqrt_dh
        probs = np.stack([softmax_rows(scores[h]) for h in range(cfg.n_heads)])
        oh = np.einsum("hij,hjd->hid", probs, vh)
        o = _merge_heads(oh)
        attn_out = _proj_forward(model, f"L{li}.output", o)
        x_mid = x + attn_out
        n2, ln2_cache = _layer_norm(
            x_mid, model.frozen[f"L{li}.ln2_g"], model.frozen[f"L{li}.ln2_b"]
        )
        pre = n2 @ model.frozen[f"L{li}.W1"].T
        hid = np.maximum(pre, 0.0)
        ffn_out = hid @ model.frozen[f"L{li}.W2"].T
        x_out = x_mid + ffn_out
        caches.append(
            {
                "ln1": ln1_cache,
                "ln2": ln2_cache,
                "n1": n1,
                "n2": n2,
                "qh": qh,
                "kh": kh,
                "vh": vh,
                "probs": probs,
                "o": o,
                "pre": pre,
                "hid": hid,
                "inv_sqrt_dh": inv_sqrt_dh,
            }
        )
        x = x_out
    return x, caches


def encode(model: Model, token_ids) -> Matrix:
    h, _ = encode_with_cache(model, token_ids)
    return h


def encode_backward(model: Model, caches: list, d_h: Matrix, grads: dict) -> None:
    """Propagate dloss/d_hidden back through all layers, accumulating adapter
    gradients into ``grads``. Frozen weights receive no gradient."""
    cfg = model.config
    dx = d_h
    for li in reversed(range(cfg.n_layers)):
        c = caches[li]
        # FFN block: x_out = x_mid + relu(n2 W1^T) W2^T
        d_ffn = dx
        d_hid = d_ffn @ model.frozen[f"L{li}.W2"]
        d_pre = d_hid * (c["pre"] > 0)
        d_n2 = d_pre @ model.frozen[f"L{li}.W1"]
        d_x_mid = dx + _layer_norm_backward(d_n2, c["ln2"])
        # attention block: x_mid = x + Wo(concat_heads(softmax(QK^T) V))
        d_attn_out = d_x_mid
        d_o = _proj_backward(model, f"L{li}.output", c["o"], d_attn_out, grads)
        d_oh = _split_heads(d_o, cfg.n_heads)
        d_probs = np.einsum("hid,hjd->hij", d_oh, c["vh"])
        d_vh = np.einsum("hij,hid->hjd", c["probs"], d_oh)
        p = c["probs"]
        d_scores = p * (d_probs - np.sum(d_probs * p, axis=2, keepdims=True))
        d_scores *= c["inv_sqrt_dh"]
        d_qh = np.einsum("hij,hjd->hid", d_scores, c["kh"])
        d_kh = np.einsum("hij,hid->hjd", d_scores, c["qh"])
        d_q = _merge_heads(d_qh)
        d_k = _merge_heads(d_kh)
        d_v = _merge_heads(d_vh)
        d_n1 = _proj_backward(model, f"L{li}.query", c["n1"], d_q, grads)
        d_n1 = d_n1 + _proj_backward(model, f"L{li}.key", c["n1"], d_k, grads)
        d_n1 = d_n1 + _proj_backward(model, f"L{li}.value", c["n1"], d_v, grads)
        dx = d_x_mid + _layer_norm_backward(d_n1, c["ln1"])


# --- task heads ---------------------------------------------------------


def tag_logits(model: Model, token_ids) -> Matrix:
    return encode(model, token_ids) @ model.heads["tag_head"].T


def arc_scores(model: Model, token_ids) -> Matrix:
    h = encode(model, token_ids)
    return _arc_scores_from_hidden(model, h)


def _arc_scores_from_hidden(model: Model, h: Matrix) -> Matrix:
    n = h.shape[0]
    dep = h @ model.heads["arc_dep_map"].T
    head_rep = np.vstack([model.heads["arc_root"][None, :], h @ model.heads["arc_head_map"].T])
    scores = dep @ head_rep.T  # (n, n+1)
    scores[np.arange(n), np.arange(n) + 1] = _NEG_INF  # no self-heads
    return scores


def predict_tags(model: Model, token_ids) -> list[int]:
    return tag_logits(model, token_ids).argmax(axis=1).tolist()


def predict_arcs(model: Model, token_ids) -> tuple[list[int], list[int]]:
    """Greedy per-row head choice plus a label per token (ties go to the
    lowest column/class index)."""
    h = encode(model, token_ids)
    heads = _arc_scores_from_hidden(model, h).argmax(axis=1).tolist()
    labels = []
    for i, head in enumerate(heads):
        head_vec = np.zeros(model.config.d_model) if head == 0 else h[head - 1]
        logits = np.concatenate([h[i], head_vec]) @ model.heads["label_head"].T
        labels.append(int(logits.argmax()))
    return heads, labels


# --- training -----------------------------------------------------------


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def make_optimizer(model: Model, lr: float = 1e-3) -> OptimizerState:
    opt = OptimizerState(lr=lr)
    for name, param in model.trainable_params().items():
        opt.m[name] = np.zeros_like(param)
        opt.v[name] = np.zeros_like(param)
    return opt


def adam_update(model: Model, grads: dict[str, np.ndarray], opt: OptimizerState) -> None:
    opt.step += 1
    params = model.trainable_params()
    bc1 = 1.0 - opt.beta1**opt.step
    bc2 = 1.0 - opt.beta2**opt.step
    for name, param in params.items():
        g = grads.get(name)
        if g is None:
            continue
        opt.m[name] = opt.beta1 * opt.m[name] + (1 - opt.beta1) * g
        opt.v[name] = opt.beta2 * opt.v[name] + (1 - opt.beta2) * (g * g)
        param -= opt.lr * (opt.m[name] / bc1) / (np.sqrt(opt.v[name] / bc2) + opt.epsilon)


def _tag_loss_and_grads(model: Model, ids, tags, grads: dict, weight: float) -> float:
    h, caches = encode_with_cache(model, ids)
    logits = h @ model.heads["tag_head"].T
    loss, d_logits = cross_entropy(logits, tags)
    d_logits = d_logits * weight
    grads["tag_head"] = grads.get("tag_head", 0) + d_logits.T @ h
    encode_backward(model, caches, d_logits @ model.heads["tag_head"], grads)
    return loss * weight


def _arc_loss_and_grads(model: Model, ids, heads, deprels, grads: dict, weight: float) -> float:
    h, caches = encode_with_cache(model, ids)
    n, d = h.shape
    dep = h @ model.heads["arc_dep_map"].T
    head_rep = np.vstack([model.heads["arc_root"][None, :], h @ model.heads["arc_head_map"].T])
    scores = dep @ head_rep.T
    scores[np.arange(n), np.arange(n) + 1] = _NEG_INF
    head_loss, d_scores = cross_entropy(scores, heads)
    d_scores = d_scores * weight
    d_scores[np.arange(n), np.arange(n) + 1] = 0.0

    d_dep = d_scores @ head_rep
    d_head_rep = d_scores.T @ dep
    grads["arc_dep_map"] = grads.get("arc_dep_map", 0) + d_dep.T @ h
    grads["arc_root"] = grads.get("arc_root", 0) + d_head_rep[0]
    grads["arc_head_map"] = grads.get("arc_head_map", 0) + d_head_rep[1:].T @ h
    d_h = d_dep @ model.heads["arc_dep_map"] + d_head_rep[1:] @ model.heads["arc_head_map"]

    # dependency-label head over (dependent, gold head) hidden pairs
    zeros = np.zeros(d)
    pair_inputs = np.stack(
        [np.concatenate([h[i], zeros if gh == 0 else h[gh - 1]]) for i, gh in enumerate(heads)]
    )
    label_logits = pair_inputs @ model.heads["label_head"].T
    label_loss, d_label_logits = cross_entropy(label_logits, deprels)
    d_label_logits = d_label_logits * weight
    grads["label_head"] = grads.get("label_head", 0) + d_label_logits.T @ pair_inputs
    d_pair = d_label_logits @ model.heads["label_head"]
    for i, gh in enumerate(heads):
        d_h[i] += d_pair[i, :d]
        if gh != 0:
            d_h[gh - 1] += d_pair[i, d:]

    encode_backward(model, caches, d_h, grads)
    return (head_loss + label_loss) * weight


def train_step(model: Model, batch, task: str, opt: OptimizerState) -> float:
    """One Adam update on the trainable parameters from a batch of sentences.

    ``batch`` entries are (token_ids, annotation) pairs: the annotation is a
    tag-id list for task 'tag' and a (head-list, deprel-id-list) pair for
    task 'arc'. Returns the mean cross-entropy over the batch.
    """
    if not batch:
        raise DataError("empty batch")
    if task not in ("tag", "arc"):
        raise DataError(f"unknown task {task!r}")
    grads: dict[str, np.ndarray] = {}
    weight = 1.0 / len(batch)
    total = 0.0
    for ids, annotation in batch:
        if annotation is None:
            raise DataError("sentence lacks annotations for the selected task")
        if task == "tag":
            total += _tag_loss_and_grads(model, ids, annotation, grads, weight)
        else:
            heads, deprels = annotation
            if heads is None or deprels is None:
                raise DataError("sentence lacks head/deprel annotations")
            total += _arc_loss_and_grads(model, ids, heads, deprels, grads, weight)
    adam_update(model, grads, opt)
    return total


# --- checkpointing ------------------------------------------------------


def model_to_dict(model: Model) -> dict:
    cfg = asdict(model.config)
    cfg["adapted_projections"] = list(model.config.adapted_projections)
    return {
        "version": MODEL_CHECKPOINT_VERSION,
        "config": cfg,
        "frozen": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                   for k, v in model.frozen.items()},
        "adapters": {
            k: {
                "W": layer.W.ravel().tolist(),
                "rank": layer.adapter.rank,
                "alpha": layer.adapter.alpha,
                "A": layer.adapter.A.ravel().tolist(),
                "B": layer.adapter.B.ravel().tolist(),
            }
            for k, layer in model.adapters.items()
        },
        "heads": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                  for k, v in model.heads.items()},
    }


def model_from_dict(doc: dict) -> Model:
    if doc.get("version") != MODEL_CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {doc.get('version')}")
    cfg_doc = dict(doc["config"])
    cfg_doc["adapted_projections"] = tuple(cfg_doc["adapted_projections"])
    config = ModelConfig(**cfg_doc)
    d = config.d_model
    frozen = {
        k: np.array(v["data"], dtype=np.float64).reshape(v["shape"])
        for k, v in doc["frozen"].items()
    }
    adapters = {}
    for k, v in doc["adapters"].items():
        rank = v["rank"]
        adapters[k] = AdaptedLinear(
            W=np.array(v["W"], dtype=np.float64).reshape(d, d),
            adapter=LoraAdapter(
                rank=rank,
                d_in=d,
                d_out=d,
                alpha=v["alpha"],
                A=np.array(v["A"], dtype=np.float64).reshape(rank, d),
                B=np.array(v["B"], dtype=np.float64).reshape(d, rank),
            ),
        )
    heads = {
        k: np.array(v["data"], dtype=np.float64).reshape(v["shape"])
        for k, v in doc["heads"].items()
    }
    for arr in frozen.values():
        arr.setflags(write=False)
    for layer in adapters.values():
        layer.W.setflags(write=False)
    return Model(config, frozen, adapters, heads)


def save_model(model: Model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> Model:
    with open(Path(path), encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
