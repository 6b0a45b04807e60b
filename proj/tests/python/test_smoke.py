import json

import numpy as np
import pytest

import mrt


def test_patch_plan_long_patches_first():
    lengths, offsets = mrt.patch_plan(10, 4)
    assert lengths == [3, 3, 2, 2]
    assert offsets == [0, 3, 6, 8]


def test_head_count():
    c = mrt.head_param_count([1, 2, 4, 16], 16, 64)
    assert c["weights"] == 2112
    assert c["flattening"] > c["weights"]


def test_default_layout_has_52_tokens():
    model = mrt.Model(mrt.default_model_config(), mrt.synthetic_schema())
    spans = model.layout()
    assert sum(length for _, _, length in spans) == 52
    assert dict((f, n) for f, _, n in spans)["mrp"] == 24
    assert sum(model.module_parameter_counts().values()) == model.parameter_count()


def test_unknown_config_key_rejected():
    cfg = mrt.default_model_config()
    cfg["d_modle"] = 3
    with pytest.raises(mrt.ConfigError):
        mrt.Model(cfg, mrt.synthetic_schema())


def test_forecast_shape_and_pad_prefix(tmp_path):
    cfg = mrt.toy_config()
    schema = mrt.toy_schema()
    model = mrt.Model(cfg, schema)
    B, C, l, f = 2, cfg["channels"], cfg["lookback"], cfg["horizon"]
    n_tvk = sum(v["group"] == "tvk" for v in schema["variables"])
    n_static = sum(v["group"] == "static" for v in schema["variables"])
    rng = np.random.default_rng(0)
    obs = rng.normal(size=(B, C, l))
    tvk = np.zeros((B, C, l + f, n_tvk))
    statics = np.zeros((B, C, n_static))
    pred = model.forecast(obs, tvk, statics, [2, 0])
    assert pred.shape == (B, C, f)
    assert np.all(np.isfinite(pred))

    noisy = obs.copy()
    noisy[0, :, :2] = 1e3
    again = model.forecast(noisy, tvk, statics, [2, 0])
    np.testing.assert_array_equal(pred, again)

    model.save(tmp_path / "ckpt")
    loaded = mrt.Model.load(tmp_path / "ckpt")
    np.testing.assert_array_equal(loaded.forecast(obs, tvk, statics, [2, 0]), pred)

    with pytest.raises(mrt.DimensionError):
        model.forecast(obs[:, :, :-1], tvk, statics)


def test_grad_check_toy_model():
    results = mrt.grad_check(mrt.toy_config(), mrt.toy_schema(), ["mrp", "head"])
    assert set(results) == {"mrp", "head"}
    for passed, err in results.values():
        assert passed and err < 1e-4


def test_synthesize_and_run_commands(tmp_path):
    h1 = mrt.synthesize(30, 1, tmp_path / "a")
    h2 = mrt.synthesize(30, 1, tmp_path / "b")
    assert h1 == h2

    cfg = mrt.default_config()
    cfg["paths"]["dataset"] = str(tmp_path / "a")
    cfg["paths"]["output"] = str(tmp_path / "out")
    cfg["model"].update({"K": [1, 2, 4], "d_model": 8, "d_ff": 16, "d_cross": 2, "heads": 2, "blocks": 1,
                         "n_tvk": 2, "n_cst": 2})
    cfg["train"].update({"batch_size": 16, "max_epochs": 2, "patience": 1})
    code, log = mrt.run("train", cfg)
    assert code == 0, log
    metrics = json.loads((tmp_path / "out" / "metrics.json").read_text())
    assert set(metrics) >= {"model", "persistence"}

    code, log = mrt.run("info", cfg)
    assert code == 0 and "tokens" in log

    cfg["model"]["heads"] = 3
    code, log = mrt.run("train", cfg)
    assert code == 2
