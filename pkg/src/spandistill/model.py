"""Decoder-only causal transformer exposing every intermediate hidden state.

The same class serves as teacher and student; the two may differ in any
config field except vocab_size (they must share a tokenizer). Blocks are
pre-norm with learned positional embeddings. `hidden_states[0]` is the
embedding output and `hidden_states[l]` the output of block l, so a trace
holds n_layers+1 states and `logits == lm_head(hidden_states[n_layers])`.

The LM head includes the final layer norm, so projecting any intermediate
state through `lm_head` uses exactly the path the final logits use.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from spandistill import tensor as T
from spandistill.tensor import Tensor, ShapeError
from spandistill.tokenizers import tokenizer_to_dict, tokenizer_from_dict

__all__ = [
    "ModelConfig",
    "ForwardTrace",
    "TinyTransformer",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_KIND = "spandistill-checkpoint"


@dataclass
class ModelConfig:
    n_layers: int
    d_model: int
    n_heads: int
    vocab_size: int
    max_seq_len: int
    d_ff: int = 0  # 0 means 4*d_model

    def __post_init__(self):
        if self.d_ff == 0:
            self.d_ff = 4 * self.d_model
        self.validate()

    def validate(self):
        for name in ("d_model", "n_heads", "vocab_size", "max_seq_len", "d_ff"):
            if getattr(self, name) <= 0:
                raise ValueError(f"ModelConfig.{name} must be positive")
        if self.n_layers < 0:
            raise ValueError("ModelConfig.n_layers must be >= 0")
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model ({self.d_model}) not divisible by n_heads ({self.n_heads})"
            )


@dataclass
class ForwardTrace:
    """Everything one forward pass produced."""

    hidden_states: list[Tensor]  # length n_layers+1; [batch, seq, d_model]
    logits: Tensor  # [batch, seq, vocab_size]
    padding_mask: np.ndarray  # boolean [batch, seq], True = real token


def _check_right_padded(mask: np.ndarray):
    """Real tokens must form a prefix of each row (right padding only)."""
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2:
        raise ShapeError(f"padding mask must be 2-d, got shape {m.shape}")
    diffs = m[:, 1:].astype(np.int8) - m[:, :-1].astype(np.int8)
    if np.any(diffs > 0):
        raise ValueError("padding mask is not right-padded (real token after padding)")
    if not m[:, 0].all():
        raise ValueError("padding mask has an empty row")


class TinyTransformer:
    """Causal LM over float64 tensors; all parameters live in a named registry."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator | None = None):
        config.validate()
        self.config = config
        self.params: dict[str, Tensor] = {}
        rng = rng if rng is not None else np.random.default_rng(0)
        c = config

        def p(name: str, shape: tuple[int, ...], kind: str = "normal"):
            if kind == "normal":
                data = rng.normal(0.0, 0.02, size=shape)
            elif kind == "zeros":
                data = np.zeros(shape)
            elif kind == "ones":
                data = np.ones(shape)
            else:
                raise ValueError(kind)
            t = Tensor(data, requires_grad=True)
            self.params[name] = t
            return t

        p("tok_emb", (c.vocab_size, c.d_model))
        p("pos_emb", (c.max_seq_len, c.d_model))
        for i in range(c.n_layers):
            pre = f"block{i}."
            p(pre + "ln1.g", (c.d_model,), "ones")
            p(pre + "ln1.b", (c.d_model,), "zeros")
            p(pre + "attn.wq", (c.d_model, c.d_model))
            p(pre + "attn.wk", (c.d_model, c.d_model))
            p(pre + "attn.wv", (c.d_model, c.d_model))
            p(pre + "attn.wo", (c.d_model, c.d_model))
            p(pre + "attn.bq", (c.d_model,), "zeros")
            p(pre + "attn.bk", (c.d_model,), "zeros")
            p(pre + "attn.bv", (c.d_model,), "zeros")
            p(pre + "attn.bo", (c.d_model,), "zeros")
            p(pre + "ln2.g", (c.d_model,), "ones")
            p(pre + "ln2.b", (c.d_model,), "zeros")
            p(pre + "mlp.w1", (c.d_model, c.d_ff))
            p(pre + "mlp.b1", (c.d_ff,), "zeros")
            p(pre + "mlp.w2", (c.d_ff, c.d_model))
            p(pre + "mlp.b2", (c.d_model,), "zeros")
        p("ln_f.g", (c.d_model,), "ones")
        p("ln_f.b", (c.d_model,), "zeros")
        p("head.w", (c.d_model, c.vocab_size))
        p("head.b", (c.vocab_size,), "zeros")

    # -- parameter plumbing -------------------------------------------------

    def named_parameters(self) -> dict[str, Tensor]:
        return self.params

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def set_trainable(self, flag: bool):
        for t in self.params.values():
            t.requires_grad = flag

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.params.items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        if set(arrays) != set(self.params):
            missing = sorted(set(self.params) - set(arrays))
            extra = sorted(set(arrays) - set(self.params))
            raise ValueError(f"state mismatch: missing={missing}, unexpected={extra}")
        for name, arr in arrays.items():
            if arr.shape != self.params[name].data.shape:
                raise ShapeError(
                    f"parameter {name}: shape {arr.shape} != expected {self.params[name].data.shape}"
                )
            self.params[name].data = np.array(arr, dtype=np.float64)
            self.params[name].grad = None

    # -- forward ------------------------------------------------------------

    def _attention(self, x: Tensor, block: str, seq: int) -> Tensor:
        c = self.config
        hd = c.d_model // c.n_heads
        P = self.params
        q = T.add(T.matmul(x, P[block + "attn.wq"]), P[block + "attn.bq"])
        k = T.add(T.matmul(x, P[block + "attn.wk"]), P[block + "attn.bk"])
        v = T.add(T.matmul(x, P[block + "attn.wv"]), P[block + "attn.bv"])
        batch = x.shape[0]

        def split(t):  # [B,S,d] -> [B,h,S,hd]
            return T.transpose(T.reshape(t, (batch, seq, c.n_heads, hd)), (0, 2, 1, 3))

        q, k, v = split(q), split(k), split(v)
        scores = T.div(T.matmul(q, T.transpose(k)), float(np.sqrt(hd)))
        causal = np.triu(np.ones((seq, seq), dtype=bool), k=1)
        mask = np.broadcast_to(causal, (batch, c.n_heads, seq, seq))
        att = T.softmax(T.masked_fill(scores, mask, -np.inf), axis=-1)
        out = T.matmul(att, v)  # [B,h,S,hd]
        out = T.reshape(T.transpose(out, (0, 2, 1, 3)), (batch, seq, c.d_model))
        return T.add(T.matmul(out, P[block + "attn.wo"]), P[block + "attn.bo"])

    def forward(self, tokens: np.ndarray, padding_mask: np.ndarray | None = None) -> ForwardTrace:
        """Run the model; capture all hidden states.

        Gradient recording follows the usual tape rules: run inside an
        active Tape for the student, outside any tape for the teacher.
        """
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.ndim != 2:
            raise ShapeError(f"tokens must be [batch, seq], got shape {tokens.shape}")
        batch, seq = tokens.shape
        c = self.config
        if seq > c.max_seq_len:
            raise ValueError(f"sequence length {seq} exceeds max_seq_len {c.max_seq_len}")
        if padding_mask is None:
            padding_mask = np.ones((batch, seq), dtype=bool)
        else:
            padding_mask = np.asarray(padding_mask, dtype=bool)
            if padding_mask.shape != tokens.shape:
                raise ShapeError(
                    f"padding mask shape {padding_mask.shape} != tokens shape {tokens.shape}"
                )
            _check_right_padded(padding_mask)

        P = self.params
        x = T.add(T.embedding(P["tok_emb"], tokens), T.embedding(P["pos_emb"], np.arange(seq)))
        hidden = [x]
        for i in range(c.n_layers):
            pre = f"block{i}."
            h = T.layer_norm(x, P[pre + "ln1.g"], P[pre + "ln1.b"])
            x = T.add(x, self._attention(h, pre, seq))
            h = T.layer_norm(x, P[pre + "ln2.g"], P[pre + "ln2.b"])
            h = T.gelu(T.add(T.matmul(h, P[pre + "mlp.w1"]), P[pre + "mlp.b1"]))
            h = T.add(T.matmul(h, P[pre + "mlp.w2"]), P[pre + "mlp.b2"])
            x = T.add(x, h)
            hidden.append(x)
        logits = self.lm_head(hidden[-1])
        return ForwardTrace(hidden, logits, padding_mask)

    def lm_head(self, h: Tensor) -> Tensor:
        """Final norm + vocabulary projection (the same path for every layer)."""
        if h.shape[-1] != self.config.d_model:
            raise ShapeError(
                f"lm_head expects feature dim {self.config.d_model}, got {h.shape[-1]}"
            )
        P = self.params
        h = T.layer_norm(h, P["ln_f.g"], P["ln_f.b"])
        return T.add(T.matmul(h, P["head.w"]), P["head.b"])

    def project_to_vocab(self, h: Tensor) -> Tensor:
        """Log of the head's softmax distribution for any layer's states."""
        return T.log_softmax(self.lm_head(h), axis=-1)

    def generate(self, prompt_ids: np.ndarray, max_new_tokens: int, stop_id: int | None = None) -> list[int]:
        """Greedy decoding from a 1-d prompt; runs without gradient recording."""
        ids = [int(i) for i in np.asarray(prompt_ids).reshape(-1)]
        for _ in range(max_new_tokens):
            window = ids[-self.config.max_seq_len :]
            trace = self.forward(np.asarray(window, dtype=np.int64)[None, :])
            nxt = int(np.argmax(trace.logits.data[0, -1]))
            ids.append(nxt)
            if stop_id is not None and nxt == stop_id:
                break
        return ids


# ---------------------------------------------------------------------------
# checkpoints: one JSON header line, then raw float64 little-endian arrays
# in manifest order


def save_checkpoint(path: str, model: TinyTransformer, tokenizer, extra: dict | None = None):
    manifest = [[name, list(t.data.shape)] for name, t in model.params.items()]
    header = {
        "kind": CHECKPOINT_KIND,
        "config": asdict(model.config),
        "tokenizer": tokenizer_to_dict(tokenizer),
        "manifest": manifest,
    }
    if extra:
        header["extra"] = extra
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for name, _ in manifest:
            f.write(model.params[name].data.astype("<f8").tobytes())


def load_checkpoint(path: str) -> tuple[TinyTransformer, object, dict]:
    """Rebuild (model, tokenizer, extra) from a checkpoint file."""
    with open(path, "rb") as f:
        header_line = f.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ValueError(f"corrupt checkpoint header: {e}") from None
        if header.get("kind") != CHECKPOINT_KIND:
            raise ValueError(f"not a checkpoint file (kind={header.get('kind')!r})")
        config = ModelConfig(**header["config"])
        tokenizer = tokenizer_from_dict(header["tokenizer"])
        model = TinyTransformer(config)
        arrays = {}
        for name, shape in header["manifest"]:
            count = int(np.prod(shape)) if shape else 1
            raw = f.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(
                    f"truncated checkpoint: parameter {name} expected {count * 8} bytes, got {len(raw)}"
                )
            arrays[name] = np.frombuffer(raw, dtype="<f8").reshape(shape)
        model.load_state_arrays(arrays)
    return model, tokenizer, header.get("extra", {})
