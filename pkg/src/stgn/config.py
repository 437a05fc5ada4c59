"""Flat ``key = value`` run configuration with command-line overrides.

Every tunable lives in :class:`RunConfig`. Files hold one assignment per
line; ``#`` starts a comment. Unknown keys are rejected. The config hash is
computed over the canonical sorted dump and stamped into every artifact.

Full-scale reference values for the optimizer (lr 2e-5, batch 2, 16-step
accumulation) are far too small a rate for a toy model trained from
scratch; the defaults below are the toy settings.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields, replace


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # data
    data_dir: str = "data"
    train_n: int = 512
    bench_n: int = 64
    train_seed: int = 1
    bench_seed: int = 2
    bench_settings: str = "all"  # "all" or comma list like self-mono,external-cross
    # model geometry
    image_size: int = 32
    patch: int = 4
    width: int = 64
    heads: int = 4
    depth: int = 4
    mlp_ratio: int = 4
    enc_depth_text: int = 2
    enc_depth_vis: int = 2
    enc_depth_refine: int = 1
    n_queries: int = 8
    # encoder pretraining
    pretrain_steps: int = 2000
    pretrain_lr: float = 1e-3
    pretrain_batch: int = 16
    # main training
    train_steps: int = 3000
    lr: float = 1e-3
    batch: int = 16
    accum: int = 1
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    lambda_tsc: float = 10.0
    log_every: int = 50
    ckpt_every: int = 1000
    # sampling / injection
    num_steps: int = 50
    gate_steps: int = 10
    injection: bool = True
    mask_threshold: float = 0.5
    # paths
    out_dir: str = "runs"
    encoder_ckpt: str = ""
    checkpoint: str = ""
    resume: str = ""
    manifest: str = ""
    split: str = "bench"
    sample_index: int = -1  # -1 = all records of the manifest
    report: str = ""

    def hash(self) -> str:
        return config_hash(self)

    def dump(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in sorted(asdict(self).items()))


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(cfg.dump().encode("utf-8")).hexdigest()[:16]


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, raw: str):
    kind = _TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} (expected {kind})") from exc
    return raw


def parse_assignments(pairs, source="<args>"):
    out = {}
    for key, raw in pairs:
        key = key.strip().replace("-", "_")
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r} in {source}")
        out[key] = _coerce(key, raw)
    return out


def parse_text(text, source="<text>"):
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        k, v = line.split("=", 1)
        pairs.append((k, v))
    return parse_assignments(pairs, source)


def load_config(path=None, overrides=()):
    values = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                values.update(parse_text(fh.read(), path))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values.update(parse_assignments(overrides))
    return replace(RunConfig(), **values)
