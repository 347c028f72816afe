"""Run configuration: one JSON file drives teacher training and distillation.

Validation failures raise ConfigError carrying the offending field's dotted
path; the CLI surfaces that path verbatim so a bad config is a one-line fix.
"""

import json
from dataclasses import dataclass, asdict

from .losses import BASE_KINDS
from .schedule import build_schedule


class ConfigError(ValueError):
    def __init__(self, fieldpath: str, message: str):
        super().__init__(f"{fieldpath}: {message}")
        self.fieldpath = fieldpath


_MODEL_KEYS = ("n_layers", "d_model", "n_heads", "max_seq_len")


@dataclass
class RunConfig:
    teacher: dict
    student: dict
    tokenizer: str = "whitespace"
    base_kind: str = "kl"
    lambda_dsa: float = 2.0
    lambda_hid: float = 0.2
    alpha: float = 0.1
    stride: int = 1
    budget: int = 2
    word_count: int = 1
    explicit_layers: list | None = None
    span_pool: str = "own"
    lr: float = 3e-3
    projector_lr: float = 5e-4
    teacher_epochs: int = 32
    distill_epochs: int = 20
    batch_size: int = 16
    eval_every: int = 50
    seed: int = 0
    loss_on: str = "response"
    heldout_fraction: float = 0.25
    corpus_path: str = "data/corpora/grammar.jsonl"
    spans_path: str | None = "data/spans/grammar_spans.jsonl"
    out_dir: str = "runs/out"

    def to_dict(self) -> dict:
        return asdict(self)


def default_config() -> dict:
    """The desk-scale defaults; λ/α and the projector rate follow the
    published coefficient tables, model rates are from-scratch values."""
    return RunConfig(
        teacher={"n_layers": 4, "d_model": 64, "n_heads": 4, "max_seq_len": 40},
        student={"n_layers": 2, "d_model": 32, "n_heads": 4, "max_seq_len": 40},
    ).to_dict()


def _check_int(path: str, value, lo: int = 1):
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if value < lo:
        raise ConfigError(path, f"must be >= {lo}, got {value}")


def _check_num(path: str, value, lo: float | None = None, strict: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if lo is not None:
        if strict and not value > lo:
            raise ConfigError(path, f"must be > {lo}, got {value}")
        if not strict and not value >= lo:
            raise ConfigError(path, f"must be >= {lo}, got {value}")


def _check_model_block(name: str, block):
    if not isinstance(block, dict):
        raise ConfigError(name, f"expected an object, got {block!r}")
    extra = set(block) - set(_MODEL_KEYS)
    if extra:
        raise ConfigError(f"{name}.{sorted(extra)[0]}", "unknown field")
    for key in _MODEL_KEYS:
        if key not in block:
            raise ConfigError(f"{name}.{key}", "missing field")
        _check_int(f"{name}.{key}", block[key], lo=0 if key == "n_layers" else 1)
    if block["d_model"] % block["n_heads"] != 0:
        raise ConfigError(
            f"{name}.d_model",
            f"{block['d_model']} not divisible by n_heads={block['n_heads']}",
        )


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", f"expected a JSON object, got {type(raw).__name__}")
    known = set(RunConfig.__dataclass_fields__)
    for key in raw:
        if key not in known:
            raise ConfigError(key, "unknown field")
    for block in ("teacher", "student"):
        if block not in raw:
            raise ConfigError(block, "missing field")
    merged = {**{k: v.default for k, v in RunConfig.__dataclass_fields__.items()
                 if k not in ("teacher", "student")}, **raw}
    cfg = RunConfig(**merged)

    _check_model_block("teacher", cfg.teacher)
    _check_model_block("student", cfg.student)
    if cfg.tokenizer not in ("whitespace", "byte"):
        raise ConfigError("tokenizer", f"must be 'whitespace' or 'byte', got {cfg.tokenizer!r}")
    if cfg.base_kind not in BASE_KINDS:
        raise ConfigError("base_kind", f"must be one of {BASE_KINDS}, got {cfg.base_kind!r}")
    _check_num("lambda_dsa", cfg.lambda_dsa, lo=0.0)
    _check_num("lambda_hid", cfg.lambda_hid, lo=0.0)
    _check_num("alpha", cfg.alpha, lo=0.0)
    if cfg.alpha > 1.0:
        raise ConfigError("alpha", f"must lie in [0, 1], got {cfg.alpha}")
    _check_int("stride", cfg.stride)
    _check_int("budget", cfg.budget)
    _check_int("word_count", cfg.word_count, lo=0)
    if cfg.word_count > cfg.budget:
        raise ConfigError("word_count", f"{cfg.word_count} exceeds budget {cfg.budget}")
    if cfg.explicit_layers is not None and not (
        isinstance(cfg.explicit_layers, list)
        and all(isinstance(x, int) and not isinstance(x, bool) for x in cfg.explicit_layers)
    ):
        raise ConfigError("explicit_layers", f"expected a list of integers, got {cfg.explicit_layers!r}")
    if cfg.span_pool not in ("own", "teacher"):
        raise ConfigError("span_pool", f"must be 'own' or 'teacher', got {cfg.span_pool!r}")
    _check_num("lr", cfg.lr, lo=0.0, strict=True)
    _check_num("projector_lr", cfg.projector_lr, lo=0.0, strict=True)
    _check_int("teacher_epochs", cfg.teacher_epochs, lo=0)
    _check_int("distill_epochs", cfg.distill_epochs, lo=0)
    _check_int("batch_size", cfg.batch_size)
    _check_int("eval_every", cfg.eval_every)
    _check_int("seed", cfg.seed, lo=0)
    if cfg.loss_on not in ("all", "response"):
        raise ConfigError("loss_on", f"must be 'all' or 'response', got {cfg.loss_on!r}")
    _check_num("heldout_fraction", cfg.heldout_fraction, lo=0.0)
    if not cfg.heldout_fraction < 1.0:
        raise ConfigError("heldout_fraction", f"must lie in [0, 1), got {cfg.heldout_fraction}")
    if not isinstance(cfg.corpus_path, str) or not cfg.corpus_path:
        raise ConfigError("corpus_path", "must be a non-empty path")
    if not isinstance(cfg.out_dir, str) or not cfg.out_dir:
        raise ConfigError("out_dir", "must be a non-empty path")
    needs_spans = cfg.lambda_dsa > 0 or cfg.lambda_hid > 0
    if needs_spans and not cfg.spans_path:
        raise ConfigError("spans_path", "required when lambda_dsa or lambda_hid is positive")

    # the schedule must be constructible for these depths
    try:
        build_schedule(
            cfg.student["n_layers"], cfg.teacher["n_layers"], cfg.stride, cfg.budget,
            word_count=cfg.word_count, explicit_layers=cfg.explicit_layers,
        )
    except ValueError as e:
        raise ConfigError("budget", str(e)) from None
    return cfg


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError("<file>", f"{path} is not valid JSON: {e}") from None
    return parse_config(raw)


def save_config(path: str, cfg: RunConfig):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
