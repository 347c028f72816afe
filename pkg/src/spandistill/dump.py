"""Hidden-state dump files: every layer's states for a set of samples.

Layout (all integers little-endian):

    b"MTAD1\\n"
    <one JSON line: {"d_model", "n_layers", "n_samples", "vocab_size"}>
    then per sample:
        u32                      sequence length S
        S x i64                  token ids
        S x u8                   padding mask (0/1)
        (n_layers+1) x S x f32   hidden states, layer-major, d_model floats per token

States are stored in float32; a round trip through disk is exact at that
precision. Readers validate the magic and header before touching array bytes
and report the byte offset of any truncation.
"""

import json
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from .model import ForwardTrace, TinyTransformer
from .tensor import Tensor

MAGIC = b"MTAD1\n"
_MAX_SEQ = 1_000_000  # sanity bound when reading untrusted length fields


@dataclass
class DumpRecord:
    """One sample: tokens, mask, and all n_layers+1 per-layer states (f32)."""

    tokens: np.ndarray  # [S] int64
    padding_mask: np.ndarray  # [S] bool
    states: list[np.ndarray]  # each [S, d_model] float32


def export_hidden(model: TinyTransformer, samples: list, path: str) -> dict:
    """Run the model on each sample and write all hidden states to path.

    samples is a list of (tokens, padding_mask) pairs of 1-d arrays;
    padding_mask may be None for fully real rows. Returns the header dict.
    """
    if not samples:
        raise ValueError("export_hidden: no samples")
    c = model.config
    header = {
        "d_model": c.d_model,
        "n_layers": c.n_layers,
        "n_samples": len(samples),
        "vocab_size": c.vocab_size,
    }
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for tokens, mask in samples:
            tokens = np.asarray(tokens, dtype=np.int64).reshape(-1)
            if mask is None:
                mask = np.ones(tokens.shape, dtype=bool)
            mask = np.asarray(mask, dtype=bool).reshape(-1)
            trace = model.forward(tokens[None, :], mask[None, :])
            f.write(np.uint32(tokens.size).tobytes())
            f.write(tokens.astype("<i8").tobytes())
            f.write(mask.astype(np.uint8).tobytes())
            for h in trace.hidden_states:
                f.write(h.data[0].astype("<f4").tobytes())
    return header


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    start = f.tell()
    buf = f.read(n)
    if len(buf) != n:
        raise ValueError(
            f"truncated dump: wanted {n} bytes for {what} at offset {start}, got {len(buf)}"
        )
    return buf


def import_hidden(path: str) -> tuple[dict, list[DumpRecord]]:
    """Read a dump written by export_hidden; returns (header, records)."""
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"not a hidden-state dump: bad magic {magic!r}")
        header_line = f.readline()
        if not header_line.endswith(b"\n"):
            raise ValueError("truncated dump: header line has no terminator")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as e:
            raise ValueError(f"corrupt dump header: {e}") from None
        for key in ("d_model", "n_layers", "n_samples", "vocab_size"):
            if key not in header:
                raise ValueError(f"corrupt dump header: missing field {key!r}")
        d, n_layers, n_samples = header["d_model"], header["n_layers"], header["n_samples"]

        records = []
        for i in range(n_samples):
            (seq,) = np.frombuffer(_read_exact(f, 4, f"sample {i} length"), dtype="<u4")
            seq = int(seq)
            if not (1 <= seq <= _MAX_SEQ):
                raise ValueError(f"corrupt dump: sample {i} claims length {seq}")
            tokens = np.frombuffer(
                _read_exact(f, 8 * seq, f"sample {i} tokens"), dtype="<i8"
            ).astype(np.int64)
            mask_raw = np.frombuffer(
                _read_exact(f, seq, f"sample {i} mask"), dtype=np.uint8
            )
            states = []
            for layer in range(n_layers + 1):
                raw = _read_exact(f, 4 * seq * d, f"sample {i} layer {layer} states")
                states.append(np.frombuffer(raw, dtype="<f4").reshape(seq, d).copy())
            records.append(DumpRecord(tokens, mask_raw.astype(bool), states))
        trailing = f.read(1)
        if trailing:
            raise ValueError(f"corrupt dump: trailing bytes at offset {f.tell() - 1}")
    return header, records


def to_trace(records: list[DumpRecord]) -> ForwardTrace:
    """Stack equal-length records into one batch trace (states back in f64).

    Dumps carry no logits, so the trace's logits slot is None; state-only
    consumers (saliency, span geometry) work unchanged.
    """
    if not records:
        raise ValueError("to_trace: no records")
    lengths = {r.tokens.size for r in records}
    if len(lengths) != 1:
        raise ValueError(f"to_trace: mixed sequence lengths {sorted(lengths)}")
    n_states = {len(r.states) for r in records}
    if len(n_states) != 1:
        raise ValueError("to_trace: records disagree on layer count")
    hidden = [
        Tensor(np.stack([r.states[l] for r in records]).astype(np.float64))
        for l in range(n_states.pop())
    ]
    mask = np.stack([r.padding_mask for r in records])
    return ForwardTrace(hidden, None, mask)
