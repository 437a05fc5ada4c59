"""Command-line entry point: ``stgn <command> --config PATH [--key value]...``.

Exit status: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import logging
import os
import sys

import numpy as np

from stgn import checkpoint as ckpt
from stgn import evalbench, gradsuite
from stgn import style_encoder as se
from stgn import train as T
from stgn.config import ConfigError, RunConfig, load_config
from stgn.flow import FlowSchedule
from stgn.injection import InjectionConfig
from stgn.model import StyleTextModel
from stgn.numerics import NumericError
from stgn.sampling import sample_records
from stgn.synthdata import MANIFEST, SETTINGS, load_split, make_split, write_ppm

log = logging.getLogger("stgn")

COMMANDS = ("gen-data", "pretrain-encoder", "train", "sample", "eval", "gradcheck")
USAGE = "usage: stgn <" + "|".join(COMMANDS) + "> --config PATH [--key value]..."


class UsageError(Exception):
    pass


def parse_args(argv):
    if not argv or argv[0] in ("-h", "--help"):
        raise UsageError(USAGE)
    cmd, rest = argv[0], list(argv[1:])
    if cmd not in COMMANDS:
        raise UsageError(f"unknown command {cmd!r}\n{USAGE}")
    config_path, overrides = None, []
    i = 0
    while i < len(rest):
        tok = rest[i]
        if not tok.startswith("--"):
            raise UsageError(f"unexpected argument {tok!r}\n{USAGE}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        elif i + 1 < len(rest) and not rest[i + 1].startswith("--"):
            val = rest[i + 1]
            i += 2
        elif key.startswith("no-"):
            key, val = key[3:], "false"
            i += 1
        else:
            val = "true"
            i += 1
        if key == "config":
            config_path = val
        else:
            overrides.append((key, val))
    return cmd, config_path, overrides


# -- helpers ------------------------------------------------------------------
def _manifest(cfg, kind=None):
    if cfg.manifest and kind is None:
        return cfg.manifest
    return os.path.join(cfg.data_dir, kind or cfg.split, MANIFEST)


def _bench_settings(cfg):
    if cfg.bench_settings == "all":
        return SETTINGS
    out = []
    for item in cfg.bench_settings.split(","):
        mode, _, lang = item.strip().partition("-")
        if (mode, lang) not in SETTINGS:
            raise ConfigError(f"unknown bench setting {item!r}")
        out.append((mode, lang))
    return tuple(out)


def _records(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"manifest not found: {path} (run gen-data first)")
    return load_split(path)


def _encoder_path(cfg):
    return cfg.encoder_ckpt or os.path.join(cfg.out_dir, "encoder.ckpt")


def _model_path(cfg):
    return cfg.checkpoint or os.path.join(cfg.out_dir, "model.ckpt")


def _write_config(cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, f"config_{cfg.hash()}.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={cfg.hash()}\n" + cfg.dump())


# -- commands -----------------------------------------------------------------
def cmd_gen_data(cfg: RunConfig):
    for kind, n, seed, settings in (
        ("train", cfg.train_n, cfg.train_seed, None),
        ("bench", cfg.bench_n, cfg.bench_seed, _bench_settings(cfg)),
    ):
        path = make_split(kind, n, cfg.data_dir, seed, settings)
        _write_config(cfg, os.path.dirname(path))
        print(f"wrote {n} records to {path}")
    return 0


def cmd_pretrain_encoder(cfg: RunConfig):
    records = _records(_manifest(cfg, "train"))
    imgs = np.stack([r.scene for r in records])
    masks = np.stack([r.text_mask for r in records]).astype(np.float64)
    out = os.path.join(cfg.out_dir, "encoder.ckpt")
    if cfg.resume:
        model, tensors, header = T.load_model(cfg.resume, cfg)
        opt = T.AdamW(se.select(model.params, T.PRETRAIN_TRAINABLE), lr=cfg.pretrain_lr, weight_decay=0.0)
        opt.load_state_arrays(tensors, header["meta"]["opt_t"])
        start = int(header["meta"]["step"])
    else:
        model = StyleTextModel.initialize(cfg.seed, T.encoder_config(cfg), T.denoiser_config(cfg))
        opt, start = None, 0
    _write_config(cfg, cfg.out_dir)
    losses, opt = T.pretrain_encoder(
        model.params, model.enc_cfg, imgs, masks, cfg.pretrain_steps, cfg.pretrain_lr, cfg.pretrain_batch,
        cfg.seed, start=start, opt=opt,
    )  # fmt: skip
    log_path = os.path.join(cfg.out_dir, "pretrain_log.tsv")
    with open(log_path, "a" if start else "w", encoding="utf-8") as fh:
        if not start:
            fh.write(f"# config_hash={cfg.hash()}\n")
        for i, loss in enumerate(losses, start):
            fh.write(f"step={i}\tseg_loss={loss:.8f}\n")
    T.save_model(out, model, cfg, cfg.pretrain_steps, opt, kind="encoder")
    if losses:
        print(f"segmentation loss {losses[0]:.5f} -> {losses[-1]:.5f}")
    print(f"saved {out}")
    return 0


def cmd_train(cfg: RunConfig):
    records = _records(_manifest(cfg, "train"))
    data = T.TrainingData.from_records(records)
    if cfg.resume:
        state = T.restore_train_state(cfg.resume, cfg)
        model = state.model
    else:
        model, _, header = T.load_model(_encoder_path(cfg), cfg)
        if header["meta"].get("kind") != "encoder":
            raise ckpt.CheckpointError(f"{_encoder_path(cfg)} is not an encoder checkpoint")
        state = None
    _write_config(cfg, cfg.out_dir)
    state = T.run_training(cfg, data, model, cfg.out_dir, state)
    last = state.history[-1][1] if state.history else None
    if last is not None:
        print(T.format_report(state.step - 1, last))
    print(f"saved {os.path.join(cfg.out_dir, 'model.ckpt')}")
    return 0


def _load_for_inference(cfg):
    model, _, header = T.load_model(_model_path(cfg), cfg)
    return model, os.path.basename(_model_path(cfg)) + ":" + str(header["meta"].get("step"))


def _injection(cfg):
    return InjectionConfig(cfg.gate_steps, cfg.injection, cfg.mask_threshold)


def cmd_sample(cfg: RunConfig):
    model, ckpt_id = _load_for_inference(cfg)
    records = _records(_manifest(cfg))
    if cfg.sample_index >= 0:
        if cfg.sample_index >= len(records):
            raise IndexError(f"sample_index {cfg.sample_index} out of range ({len(records)} records)")
        records = [records[cfg.sample_index]]
    out_dir = os.path.join(cfg.out_dir, "samples")
    os.makedirs(out_dir, exist_ok=True)
    schedule = FlowSchedule(cfg.num_steps)
    H = model.den_cfg.scene_size
    rows = []
    for start in range(0, len(records), 32):
        part = records[start : start + 32]
        canvas, _ = sample_records(model, part, schedule, _injection(cfg), cfg.seed)
        for rec, img in zip(part, canvas):
            write_ppm(os.path.join(out_dir, f"{rec.id}.ppm"), img, f"config_hash={cfg.hash()}")
            pred = evalbench.ocr_decode(img[H:], rec.target.box)
            rows.append(f"{rec.id}\t{rec.mode}-{rec.lang}\t{rec.text}\t{pred}")
    with open(os.path.join(out_dir, "samples.tsv"), "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={cfg.hash()}\n# checkpoint={ckpt_id}\n# seed={cfg.seed}\n")
        fh.write("id\tsetting\ttext\tdecoded\n")
        fh.write("\n".join(rows) + "\n")
    print(f"wrote {len(rows)} samples to {out_dir}")
    return 0


def cmd_eval(cfg: RunConfig):
    from stgn.sampling import make_generate_fn

    model, ckpt_id = _load_for_inference(cfg)
    records = _records(_manifest(cfg))
    gen = make_generate_fn(model, FlowSchedule(cfg.num_steps), _injection(cfg), cfg.seed)
    report = evalbench.run_benchmark(gen, records, cfg.hash(), ckpt_id, cfg.seed)
    path = cfg.report or os.path.join(cfg.out_dir, f"report_{cfg.hash()}.tsv")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    report.write(path)
    sys.stdout.write(report.to_text())
    return 0


def cmd_gradcheck(cfg: RunConfig):
    results = gradsuite.run_suite(cfg.seed)
    print(gradsuite.format_table(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return 2
    return 0


HANDLERS = {
    "gen-data": cmd_gen_data,
    "pretrain-encoder": cmd_pretrain_encoder,
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    logging.basicConfig(level=os.environ.get("STGN_LOG", "WARNING"), format="%(levelname)s %(name)s: %(message)s")
    try:
        cmd, config_path, overrides = parse_args(argv)
        cfg = load_config(config_path, overrides)
    except (UsageError, ConfigError) as exc:
        print(str(exc), file=sys.stderr)
        return 1
    try:
        return HANDLERS[cmd](cfg)
    except (OSError, ckpt.CheckpointError, NumericError, ValueError, IndexError) as exc:
        print(f"stgn {cmd}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
