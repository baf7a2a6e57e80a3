import json

import numpy as np
import pytest

import gs4d


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    root = tmp_path_factory.mktemp("gs4d")
    data = root / "ds"
    code, _, err = gs4d.cli(["synth", "--out", str(data), "--size", "32",
                             "--train-frames", "6", "--test-frames", "2"])
    assert code == 0, err
    out = root / "run"
    code, _, err = gs4d.cli(["train", "--data", str(data), "--out", str(out), "--iters", "60",
                             "--set", "sh_degree=0", "--set", "warmup_iters=20",
                             "--set", "field.resolution=8,8,8,8"])
    assert code == 0, err
    return data, out / "checkpoint.ckpt"


def test_psnr_and_ssim():
    a = np.full((16, 16, 3), 0.5)
    assert gs4d.psnr(a, a) == 100.0
    assert gs4d.psnr(a, a + 0.5) == pytest.approx(6.0206, abs=1e-4)
    assert gs4d.ssim(a, a) == pytest.approx(1.0)
    with pytest.raises(gs4d.ShapeError):
        gs4d.psnr(a, np.zeros((8, 8, 3)))
    with pytest.raises(gs4d.InvalidInput):
        gs4d.ssim(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)))


def test_covariance_is_symmetric_psd():
    c = gs4d.covariance([0.2, 0.5, 1.0], [0.9, 0.1, -0.3, 0.2] / np.linalg.norm([0.9, 0.1, -0.3, 0.2]))
    assert np.allclose(c, c.T)
    assert np.all(np.linalg.eigvalsh(c) > 0)
    assert np.allclose(np.sort(np.linalg.eigvalsh(c)), [0.04, 0.25, 1.0])


def test_cli_rejects_unknown_flags():
    code, _, err = gs4d.cli(["render", "--nope"])
    assert code != 0
    assert "Usage" in err


def test_checkpoint_render_and_eval(run):
    data, ckpt = run
    c = gs4d.Checkpoint.load(str(ckpt))
    assert c.iteration == 60
    assert c.num_gaussians > 0
    img = c.render(str(data), split="test", view=1)
    assert img.shape == (32, 32, 3)
    assert np.all((img >= 0) & (img <= 1))
    g = c.gaussians(0.5)
    assert g["positions"].shape == (c.num_gaussians, 3)
    assert g["rotations"].shape == (c.num_gaussians, 4)
    static = c.render(str(data), view=0, deformed=False)
    assert np.array_equal(static, c.render(str(data), view=0, deformed=False))
    code, out, err = gs4d.cli(["eval", "--checkpoint", str(ckpt), "--data", str(data)])
    assert code == 0, err
    report = json.loads(out)
    assert len(report["frames"]) == 2
    assert report["mean_psnr"] > 10


def test_damaged_checkpoint_raises(tmp_path, run):
    _, ckpt = run
    raw = bytearray(ckpt.read_bytes())
    raw[40] ^= 0xFF
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(bytes(raw))
    with pytest.raises(gs4d.IntegrityError):
        gs4d.Checkpoint.load(str(bad))
    with pytest.raises(gs4d.Error):
        gs4d.Checkpoint.load(str(tmp_path / "missing.ckpt"))
