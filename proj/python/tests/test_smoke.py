"""End-to-end smoke tests for the Python bindings (kept fast; the exhaustive
suites live in the C++ tests)."""

import numpy as np
import pytest

import gsfda


def small_config(seed=7):
    cfg = gsfda.RunConfig()
    cfg.dims.input_dim = 2
    cfg.dims.hidden = 32
    cfg.dims.feature = 16
    cfg.dims.classes = 2
    cfg.epochs_source = 40
    cfg.epochs_target = 20
    cfg.epochs_dc = 60
    cfg.batch_size = 64
    cfg.k = 3
    cfg.seed = seed
    return cfg


def test_two_moons_shapes_and_determinism():
    a = gsfda.gen_two_moons(100, 0.1, 30.0, seed=3)
    b = gsfda.gen_two_moons(100, 0.1, 30.0, seed=3)
    assert a.features.shape == (100, 2)
    assert len(a.labels) == 100
    np.testing.assert_array_equal(a.features, b.features)
    assert sorted(set(a.labels)) == [0, 1]


def test_harmonic_mean_values():
    assert round(gsfda.harmonic_mean(90.4, 85.0), 1) == 87.6
    assert round(gsfda.harmonic_mean(99.6, 48.1), 1) == 64.9
    assert gsfda.harmonic_mean(0.0, 50.0) == 0.0


def test_gradchecks_pass():
    results = gsfda.run_gradchecks(seed=0, trials=3)
    assert len(results) == 6
    for r in results:
        assert r.pass_, f"{r.name}: max_err={r.max_err}"


def test_pretrain_adapt_evaluate(tmp_path):
    cfg = small_config()
    src = gsfda.gen_two_moons(400, 0.1, 0.0, seed=11)
    tgt = gsfda.gen_two_moons(400, 0.1, 45.0, seed=12)
    src_tr, src_te = gsfda.split(src, 0.9, seed=1)
    tgt_tr, tgt_te = gsfda.split(tgt, 0.9, seed=2)

    pre = gsfda.pretrain_source(cfg, src_tr)
    model = pre.model
    assert model.masks.n_domains() == 2
    assert all(att.frozen for att in model.masks.attentions)

    before = gsfda.evaluate(model, [src_te, tgt_te])
    assert before.acc_source > 90.0

    protect = gsfda.merge_masks(model.masks, 1)
    res = gsfda.adapt_target(cfg, model, 1, tgt_tr, protect)
    after = gsfda.evaluate(model, [src_te, tgt_te])
    assert after.acc_target >= before.acc_target
    assert len(res.epochs) == cfg.epochs_target

    # checkpoint round trip is bit-exact
    path = str(tmp_path / "model.bin")
    gsfda.save_checkpoint(path, model)
    loaded = gsfda.load_checkpoint(path)
    again = gsfda.evaluate(loaded.model, [src_te, tgt_te])
    assert again.per_domain == after.per_domain


def test_agnostic_requires_dc():
    cfg = small_config()
    cfg.epochs_source = 5
    src = gsfda.gen_two_moons(200, 0.1, 0.0, seed=5)
    model = gsfda.pretrain_source(cfg, src).model
    with pytest.raises(RuntimeError):
        gsfda.evaluate(model, [src], mode="agnostic")


def test_cli_gradcheck_in_process():
    assert gsfda.run_cli(["gradcheck"]) == 0
    assert gsfda.run_cli(["no-such-command"]) == 2
