import math

import numpy as np
import pytest

import haanet


def test_generated_pair_obeys_scattering_model():
    p = haanet.generate_pair(seed=3, size=32)
    assert p["hazy"].shape == (1, 3, 32, 32)
    assert p["transmission"].shape == (1, 1, 32, 32)
    a = np.asarray(p["airlight"]).reshape(1, 3, 1, 1)
    t = p["transmission"]
    expected = p["clean"] * t + a * (1 - t)
    assert np.max(np.abs(expected - p["hazy"])) < 1e-12
    mask = np.broadcast_to(t >= 0.05, p["clean"].shape)
    j = haanet.invert_exact(p["hazy"], t, p["airlight"])
    assert np.max(np.abs(j - p["clean"])[mask]) < 1e-6


def test_transmission_closed_form():
    t = haanet.transmission(np.full((1, 1, 2, 2), math.log(2.0)), 1.0)
    assert np.allclose(t, 0.5, atol=1e-15)


def test_metrics():
    x = np.random.default_rng(0).uniform(0.2, 0.8, (3, 16, 16))
    assert haanet.psnr(x, x) == 100.0
    assert abs(haanet.psnr(x + 0.1, x) - 20.0) < 1e-6
    assert abs(haanet.ssim(x, x) - 1.0) < 1e-12
    y = np.random.default_rng(1).uniform(0.0, 1.0, (3, 16, 16))
    assert abs(haanet.ssim(x, y) - haanet.ssim(y, x)) < 1e-12


def test_network_forward_and_checkpoint(tmp_path):
    net = haanet.Network(haanet.NetConfig.desk(), seed=1)
    x = np.random.default_rng(2).uniform(0, 1, (1, 3, 16, 16)).astype(np.float32)
    y = net.dehaze(x)
    assert y.shape == x.shape
    assert y.min() >= 0.0 and y.max() <= 1.0
    assert np.array_equal(haanet.Network(haanet.NetConfig.desk(), seed=1).dehaze(x), y)
    path = tmp_path / "m.haan"
    net.save(path)
    back = haanet.Network.load(path)
    assert back.config == haanet.NetConfig.desk()
    assert back.parameter_count() == net.parameter_count()
    assert np.array_equal(back.dehaze(x), y)
    with pytest.raises(haanet.ShapeError):
        net.dehaze(np.zeros((1, 3, 10, 12), np.float32))


def test_parameter_count_full_width():
    net = haanet.Network(haanet.NetConfig(64, 4), seed=0)
    assert 100_000 < net.parameter_count() < 10_000_000
    assert any(n.startswith("haab3.haam") for n in net.parameter_names())


def test_ppm_round_trip(tmp_path):
    img = np.random.default_rng(3).uniform(0, 1, (3, 5, 7)).astype(np.float32)
    haanet.save_ppm(tmp_path / "a.ppm", img)
    back = haanet.load_ppm(tmp_path / "a.ppm")
    assert back.shape == (1, 3, 5, 7)
    assert np.max(np.abs(back[0] - img)) <= 0.5 / 255 + 1e-6


def test_config_and_schedule():
    text = haanet.parse_train_config("crop = 32\n")
    assert "crop = 32" in text and "lr_max = " in text
    with pytest.raises(haanet.ConfigError):
        haanet.parse_train_config("crop = 63\n")
    assert abs(haanet.cosine_lr(0) - 1.5e-4) < 1e-18


def test_synth_train_eval_cycle(tmp_path):
    haanet.synth(seed=5, count=5, size=32, out_dir=tmp_path / "data")
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("base_channels = 8\nnum_haab = 1\nbatch_size = 2\ncrop = 16\n"
                   "total_steps = 2\nval_pairs = 2\nval_interval = 1\n")
    result = haanet.train(config=cfg, data_dir=tmp_path / "data", out=tmp_path / "run")
    assert not result["diverged"]
    assert (tmp_path / "run" / "model.haan").exists()
    rows = haanet.evaluate(tmp_path / "run" / "model.haan", tmp_path / "data", tmp_path / "e.csv")
    assert len(rows) == 6 and rows[-1][0] == "mean"
    assert (tmp_path / "e.csv").read_text().startswith("pair_id,psnr_hazy,psnr_pred")


def test_gradcheck_haam_passes():
    groups = haanet.gradcheck("haam")
    assert groups and all(g[4] for g in groups)
