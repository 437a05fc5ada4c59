import dataclasses

import numpy as np
import pytest

from stgn import checkpoint as ckpt
from stgn import train as T
from stgn.config import ConfigError, RunConfig, load_config, parse_text
from stgn.optim import AdamW
from stgn.numerics import Tensor
from stgn.synthdata import generate

TINY = dict(width=16, heads=2, depth=1, enc_depth_text=1, enc_depth_vis=1, n_queries=2, batch=2, pretrain_batch=2)


def tiny_cfg(**kw):
    return dataclasses.replace(RunConfig(), **{**TINY, **kw})


@pytest.fixture(scope="module")
def data():
    return T.TrainingData.from_records(generate("train", 8, 1))


def fresh(cfg):
    from stgn.model import StyleTextModel

    return StyleTextModel.initialize(cfg.seed, T.encoder_config(cfg), T.denoiser_config(cfg))


# -- config -------------------------------------------------------------------
def test_config_parse_and_hash(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nlr = 0.01\ninjection = no  # trailing\n")
    cfg = load_config(str(p), [("train-steps", "7")])
    assert cfg.lr == 0.01 and cfg.injection is False and cfg.train_steps == 7
    assert cfg.hash() != RunConfig().hash()
    assert RunConfig().hash() == RunConfig().hash()
    assert parse_text(cfg.dump()) == dataclasses.asdict(cfg)


def test_config_defaults_match_reference_values():
    cfg = RunConfig()
    assert cfg.lambda_tsc == 10.0 and cfg.gate_steps == 10 and cfg.num_steps == 50
    assert (cfg.beta1, cfg.beta2, cfg.weight_decay) == (0.9, 0.999, 0.01)


@pytest.mark.parametrize("text", ["bogus = 1", "lr = fast", "injection = maybe", "just words"])
def test_config_rejects(text):
    with pytest.raises(ConfigError):
        parse_text(text)


def test_config_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/cfg")


# -- checkpoint ---------------------------------------------------------------
def test_checkpoint_roundtrip_bit_exact(tmp_path, rng):
    tensors = {"a": rng.normal((2, 3)), "b.c": rng.normal(5), "s": np.array(1.5)}
    path = tmp_path / "x.ckpt"
    ckpt.save(path, tensors, "abc123", {"seed": 1}, {"step": 4})
    got, header = ckpt.load(path)
    for k in tensors:
        assert got[k].tobytes() == np.asarray(tensors[k], dtype=np.float64).tobytes()
    assert header["config_hash"] == "abc123" and header["rng_state"] == {"seed": 1} and header["meta"] == {"step": 4}
    raw = path.read_bytes()
    assert raw[:4] == b"STGN"


def test_checkpoint_bad_magic_and_version(tmp_path):
    path = tmp_path / "x.ckpt"
    ckpt.save(path, {"a": np.ones(2)}, "h")
    raw = bytearray(path.read_bytes())
    (tmp_path / "m.ckpt").write_bytes(b"NOPE" + bytes(raw[4:]))
    with pytest.raises(ckpt.CheckpointError, match="magic"):
        ckpt.load(tmp_path / "m.ckpt")
    raw[4] = 9
    (tmp_path / "v.ckpt").write_bytes(bytes(raw))
    with pytest.raises(ckpt.CheckpointError, match="version"):
        ckpt.load(tmp_path / "v.ckpt")


def test_checkpoint_truncated(tmp_path):
    path = tmp_path / "x.ckpt"
    ckpt.save(path, {"a": np.ones(20)}, "h")
    (tmp_path / "t.ckpt").write_bytes(path.read_bytes()[:-16])
    with pytest.raises(ckpt.CheckpointError):
        ckpt.load(tmp_path / "t.ckpt")


# -- optimizer ----------------------------------------------------------------
def test_adamw_first_step_and_decoupled_decay():
    p = Tensor(np.array([1.0, -2.0]))
    opt = AdamW({"p": p}, lr=0.1, weight_decay=0.5)
    opt.step({"p": np.array([3.0, -1e-3])})
    # first bias-corrected step is lr * sign(g) (up to eps); decay is lr * wd * p
    np.testing.assert_allclose(p.data, [1.0 - 0.1 * 0.5 - 0.1, -2.0 + 0.1 * 0.5 * 2 + 0.1], atol=1e-5)


# -- training -----------------------------------------------------------------
def test_grad_accumulation_equals_big_batch(data):
    cfg = tiny_cfg()
    m = fresh(cfg)
    data.attach_tokens(m.params, m.enc_cfg)
    draw = T.draw_step(0, 0, len(data), 4, m.den_cfg.canvas_hw + (3,))
    g1, r1 = T.accumulated_gradients(m, data, draw, 1, 10.0)
    g4, r4 = T.accumulated_gradients(m, data, draw, 4, 10.0)
    assert set(g1) == set(g4)
    for k in g1:
        np.testing.assert_allclose(g4[k], g1[k], atol=1e-10, rtol=0)
    assert r1.total == pytest.approx(r4.total, abs=1e-10)


def test_lambda_zero_matches_cfm_only(data):
    cfg = tiny_cfg(lambda_tsc=0.0)
    m = fresh(cfg)
    data.attach_tokens(m.params, m.enc_cfg)
    idx, t = np.array([0, 3]), np.array([0.2, 0.7])
    eps = np.random.default_rng(0).standard_normal((2, 64, 32, 3))
    obj, rep = T.batch_objective(m, data, idx, t, eps, 0.0)
    assert rep.total == rep.l_cfm and rep.l_tsc > 0
    obj.backward()
    grads0 = T._collect_grads(m.params)
    from stgn import flow
    from stgn.denoiser import to_model

    cond = data.cond(idx)
    x0 = to_model(cond.concat_input)
    st = flow.interpolate(x0, T.masked_noise(eps, x0, cond.inpaint_mask), t)
    v, _ = m.velocity(Tensor(st.xt), st.t, cond, m.style(cond))
    flow.cfm_loss(v, st).backward()
    grads1 = T._collect_grads(m.params)
    for k in grads1:
        assert np.array_equal(grads0[k], grads1[k])


def test_tsc_term_reaches_denoiser(data):
    cfg = tiny_cfg()
    m = fresh(cfg)
    from stgn.gradsuite import _randomize
    from stgn.numerics import Rng

    _randomize(m.params, Rng(0).child("r"), 0.2)
    data.attach_tokens(m.params, m.enc_cfg)
    idx, t = np.array([1]), np.array([0.5])
    eps = np.random.default_rng(1).standard_normal((1, 64, 32, 3))
    a, _ = T.batch_objective(m, data, idx, t, eps, 0.0)
    a.backward()
    ga = T._collect_grads(m.params)["den.final.out.w"]
    b, _ = T.batch_objective(m, data, idx, t, eps, 10.0)
    b.backward()
    gb = T._collect_grads(m.params)["den.final.out.w"]
    assert not np.allclose(ga, gb)


def test_lambda_logged(tmp_path, data):
    cfg = tiny_cfg(train_steps=2, log_every=1)
    T.run_training(cfg, data, fresh(cfg), tmp_path)
    lines = (tmp_path / "train_log.tsv").read_text().splitlines()
    assert lines[0] == f"# config_hash={cfg.hash()}"
    assert all("lambda_tsc=10\t" in ln for ln in lines[1:])


def test_resume_is_bit_exact(tmp_path, data):
    cfg = tiny_cfg(train_steps=3, ckpt_every=0)
    straight = T.run_training(cfg, data, fresh(cfg), tmp_path / "a")
    half = dataclasses.replace(cfg, train_steps=2)
    T.run_training(half, data, fresh(cfg), tmp_path / "b")
    state = T.restore_train_state(tmp_path / "b" / "model.ckpt", cfg)
    T.run_training(cfg, T.TrainingData.from_records(generate("train", 8, 1)), state.model, tmp_path / "b", state)
    a, _ = ckpt.load(tmp_path / "a" / "model.ckpt")
    b, _ = ckpt.load(tmp_path / "b" / "model.ckpt")
    assert set(a) == set(b)
    for k in a:
        assert a[k].tobytes() == b[k].tobytes(), k
    assert straight.step == 3


def test_frozen_backbones_untouched(tmp_path, data):
    from stgn import style_encoder as se

    cfg = tiny_cfg(train_steps=2)
    m = fresh(cfg)
    before = {k: p.data.copy() for k, p in se.select(m.params, se.E_TEXT + se.E_VIS + se.SEG_HEAD).items()}
    T.run_training(cfg, data, m, tmp_path)
    for k, v in before.items():
        assert np.array_equal(m.params[k].data, v), k


def test_load_model_geometry_mismatch(tmp_path, data):
    cfg = tiny_cfg(train_steps=1)
    T.run_training(cfg, data, fresh(cfg), tmp_path)
    with pytest.raises(ckpt.CheckpointError):
        T.load_model(tmp_path / "model.ckpt", dataclasses.replace(cfg, width=32))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts_with_step(data):
    from stgn.numerics import NumericError

    cfg = tiny_cfg(train_steps=1)
    m = fresh(cfg)
    m.params["den.final.out.b"].data[:] = np.inf
    state = T.new_train_state(m, cfg)
    with pytest.raises(NumericError, match="step 0"):
        T.train_steps(state, data, cfg, 1)

