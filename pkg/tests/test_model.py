import math

import numpy as np
import pytest

from accon import autodiff as ad
from accon.errors import ContractError
from accon.model import (
    ModelConfig,
    ModelParams,
    forward,
    init_bound,
    init_params,
    load_checkpoint,
    predict,
    save_checkpoint,
)


def test_init_is_deterministic_and_bounded():
    cfg = ModelConfig(input_dim=64, encoder_layers=(64, 64), proj_dim=16)
    a, b = init_params(cfg, 7), init_params(cfg, 7)
    assert a.equal(b)
    assert not a.equal(init_params(cfg, 8))
    assert np.abs(a["enc1.w"].data).max() <= math.sqrt(6 / 64)
    assert init_bound(6) == 1.0
    assert all(np.all(a[n].data == 0) for n in a.names() if n.endswith(".b"))


def test_parameter_layout():
    cfg = ModelConfig(input_dim=5, encoder_layers=(7, 3), proj_dim=4)
    p = init_params(cfg, 0)
    assert p.names() == ["enc0.w", "enc0.b", "enc1.w", "enc1.b", "proj.w", "proj.b", "pred.w"]
    assert p["pred.w"].shape == (4, 1)
    assert "pred.b" not in p
    no_proj = init_params(cfg.model_copy(update={"head_mode": "no_proj"}), 0)
    assert "proj.w" not in no_proj and no_proj["pred.w"].shape == (3, 1)
    assert "proj.b" not in init_params(cfg.model_copy(update={"projection_bias": False}), 0)


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(proj_dim=1)
    with pytest.raises(ValueError):
        ModelConfig(encoder_layers=())
    with pytest.raises(ValueError):
        ModelConfig(encoder_layers=(4, 0))


def test_zero_weights_hit_norm_floor():
    cfg = ModelConfig(input_dim=3, encoder_layers=(4,), proj_dim=2)
    p = init_params(cfg, 0)
    for t in p.parameters():
        t.data[...] = 0.0
    out = forward(p, np.ones((5, 3)), cfg)
    assert np.array_equal(out.prediction.data, np.zeros(5))
    assert out.degenerate_rows == 5


def test_linear_composition():
    cfg = ModelConfig(input_dim=2, encoder_layers=(2,), activation="identity", proj_dim=2)
    p = ModelParams({
        "enc0.w": ad.Tensor(np.eye(2)), "enc0.b": ad.Tensor(np.zeros(2)),
        "proj.w": ad.Tensor(np.eye(2)), "proj.b": ad.Tensor(np.zeros(2)),
        "pred.w": ad.Tensor([[1.0], [0.0]]),
    })
    x = np.array([[3.0, 4.0], [-1.0, 2.0]])
    out = forward(p, x, cfg)
    assert np.array_equal(out.prediction.data, out.projection.data[:, 0])
    assert np.allclose(out.contrast.data, x / np.linalg.norm(x, axis=1, keepdims=True), atol=1e-15)


def _loop_forward(p, x, cfg):
    rows = []
    for xi in x:
        h = list(xi)
        for k in range(len(cfg.encoder_layers)):
            w, b = p[f"enc{k}.w"].data, p[f"enc{k}.b"].data
            h = [max(0.0, sum(h[i] * w[i, j] for i in range(len(h))) + b[j]) for j in range(w.shape[1])]
        w, b = p["proj.w"].data, p["proj.b"].data
        z = [sum(h[i] * w[i, j] for i in range(len(h))) + b[j] for j in range(w.shape[1])]
        wh = p["pred.w"].data[:, 0]
        rows.append(sum(zj * wj for zj, wj in zip(z, wh)))
    return np.array(rows)


@pytest.mark.parametrize("seed", range(3))
def test_matches_loop_reference(seed):
    cfg = ModelConfig(input_dim=5, encoder_layers=(6, 4), proj_dim=3)
    rng = np.random.default_rng(seed)
    p = init_params(cfg, rng)
    for n in p.names():
        if n.endswith(".b"):
            p[n].data = rng.normal(size=p[n].shape) * 0.1
    x = rng.normal(size=(7, 5))
    got = forward(p, x, cfg).prediction.data
    assert np.allclose(got, _loop_forward(p, x, cfg), rtol=0, atol=1e-12)


def test_head_modes_route_contrast():
    cfg = ModelConfig(input_dim=3, encoder_layers=(5,), proj_dim=4)
    x = np.random.default_rng(1).normal(size=(4, 3))
    p = init_params(cfg, 1)
    std = forward(p, x, cfg)
    before = forward(p, x, cfg.model_copy(update={"head_mode": "before_proj"}))
    assert before.contrast.shape == (4, 5)
    assert np.allclose(np.linalg.norm(before.contrast.data, axis=1), 1.0)
    assert np.array_equal(before.prediction.data, std.prediction.data)
    norm = forward(p, x, cfg.model_copy(update={"predictor_input": "normalized"}))
    assert np.allclose(norm.prediction.data, (std.contrast.data @ p["pred.w"].data)[:, 0], atol=1e-15)


def test_forward_deterministic_and_predict_has_no_graph():
    cfg = ModelConfig(input_dim=4)
    p = init_params(cfg, 3)
    x = np.random.default_rng(3).normal(size=(6, 4))
    a = forward(p, x, cfg).prediction.data
    b = forward(p, x, cfg).prediction.data
    assert np.array_equal(a, b)
    yhat, z = predict(p, x, cfg)
    assert np.array_equal(yhat, a) and z.shape == (6, cfg.proj_dim)


def test_forward_input_contract():
    cfg = ModelConfig(input_dim=2)
    p = init_params(cfg, 0)
    with pytest.raises(ContractError):
        forward(p, np.array([[1.0, np.nan]]), cfg)
    with pytest.raises(ContractError):
        forward(p, np.ones((3, 4)), cfg)


def test_both_branches_reach_encoder():
    from accon.geometry import LabelRange
    from accon.losses import LossConfig, accon_batch_loss, regression_loss
    from accon.pairing import build_pair_sets

    cfg = ModelConfig(input_dim=4, encoder_layers=(8,), proj_dim=3)
    rng = np.random.default_rng(4)
    x = rng.normal(size=(6, 4))
    y = np.array([10.0, 50.0, 90.0, 10.0, 50.0, 90.0])
    for branch in ("reg", "accon"):
        p = init_params(cfg, 4)
        out = forward(p, x, cfg)
        if branch == "reg":
            loss = regression_loss(out.prediction, y, "mse")
        else:
            lc = LossConfig(tau=0.5)
            loss = accon_batch_loss(out.contrast, y, build_pair_sets(y, lc.bin), lc, LabelRange())
        ad.backward(loss)
        assert np.linalg.norm(p["enc0.w"].grad) > 0


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    cfg = ModelConfig(input_dim=3, encoder_layers=(4,), proj_dim=2, activation="tanh")
    p = init_params(cfg, 9)
    p["enc0.b"].data = np.array([1 / 3, -2.5e-300, 1e300, math.pi])
    path = tmp_path / "ck.json"
    save_checkpoint(path, p, cfg, {"epoch": 3})
    q, cfg2 = load_checkpoint(path)
    assert cfg2 == cfg
    assert q.equal(p)
    save_checkpoint(tmp_path / "again.json", q, cfg2, {"epoch": 3})
    assert path.read_bytes() == (tmp_path / "again.json").read_bytes()


def test_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"format": "something"}')
    with pytest.raises(ContractError):
        load_checkpoint(path)
