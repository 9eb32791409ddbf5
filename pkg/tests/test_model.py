import numpy as np
import pytest
import torch

from roca.config import ConfigError, SeriesSpec, TrainConfig
from roca.model import (
    EncoderSpec,
    ProjectionBatch,
    RocaNet,
    build_model,
    compute_center,
    load_checkpoint,
    save_checkpoint,
    unit_rows,
)
from roca.losses import ContractViolation

SPEC = EncoderSpec(
    in_dim=1, window_length=16, channels=(16, 16), projection_dim=8, projector_hidden=16
)


def _model(seed=0, spec=SPEC):
    return build_model(spec, seed)


def test_spec_shape_arithmetic():
    assert SPEC.out_length == 4  # 16 -> 8 -> 4
    assert SPEC.feature_dim == 16
    three = EncoderSpec(in_dim=3, window_length=32, channels=(8, 8, 8))
    assert three.out_length == 4
    with pytest.raises(ConfigError, match="collapses to zero"):
        EncoderSpec(in_dim=1, window_length=4, channels=(8, 8, 8))
    with pytest.raises(ConfigError, match="odd"):
        EncoderSpec(in_dim=1, window_length=16, channels=(8,), kernel_size=4)


def test_spec_from_config_block_defaults():
    cfg = TrainConfig()
    uni = EncoderSpec.from_config(SeriesSpec("u", 1, 16, 16), cfg)
    assert len(uni.channels) == 2 and uni.channels[-1] == 32
    multi = EncoderSpec.from_config(SeriesSpec("m", 5, 32, 16), cfg)
    assert len(multi.channels) == 3 and multi.channels[-1] == 64
    pinned = EncoderSpec.from_config(
        SeriesSpec("p", 1, 16, 16), TrainConfig(encoder_blocks=1, encoder_channels=4)
    )
    assert pinned.channels == (4,)


def test_forward_shapes_and_unit_projections():
    model = _model()
    x = torch.randn(5, 16, 1)
    out = model(x)
    assert out.z.shape == (5, 4, 16)
    assert out.z_prime.shape == (5, 4, 16)
    assert out.q.shape == (5, 8) and out.q_prime.shape == (5, 8)
    for t in (out.q, out.q_prime):
        assert torch.allclose(torch.linalg.vector_norm(t, dim=1), torch.ones(5), atol=1e-5)
    # reconstruction is a real decode, not an identity
    assert not torch.allclose(out.z, out.z_prime)
    ctx = model.context(out.z)
    assert ctx.shape == (5, 16) and torch.isfinite(ctx).all()


def test_forward_rejects_wrong_shapes():
    model = _model()
    with pytest.raises(ConfigError):
        model.encode(torch.randn(5, 8, 1))  # wrong window length
    with pytest.raises(ConfigError):
        model.encode(torch.randn(5, 16, 2))  # wrong dim


def test_eval_mode_is_deterministic_and_batch_invariant():
    model = _model()
    model.eval()
    x = torch.randn(9, 16, 1)
    with torch.no_grad():
        a = model(x)
        b = model(x)
        single = model(x[3:4])
    assert torch.equal(a.q, b.q) and torch.equal(a.q_prime, b.q_prime)
    # row 3 scored alone matches row 3 scored in the batch
    assert torch.allclose(a.q[3], single.q[0], atol=1e-5)
    assert torch.allclose(a.q_prime[3], single.q_prime[0], atol=1e-5)


def test_train_mode_dropout_varies():
    model = _model()
    model.train()
    x = torch.randn(4, 16, 1)
    a, b = model(x), model(x)
    assert not torch.allclose(a.q, b.q)


def test_init_seed_reproducibility():
    a, b, c = _model(7), _model(7), _model(8)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)
    assert any(
        not torch.equal(pa, pc) for pa, pc in zip(a.parameters(), c.parameters())
    )


def test_unit_rows_guard():
    v = torch.tensor([[3.0, 4.0], [0.0, 0.0]])
    out, guarded = unit_rows(v)
    assert guarded == 1
    assert torch.allclose(torch.linalg.vector_norm(out, dim=1), torch.ones(2), atol=1e-6)
    assert torch.isfinite(out).all()
    assert torch.allclose(out[0], torch.tensor([0.6, 0.8]))
    ok, guarded = unit_rows(torch.randn(10, 4))
    assert guarded == 0


def test_compute_center_oracle():
    q = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
    qp = torch.tensor([[1.0, 0.0], [1.0, 0.0]], dtype=torch.float64)
    c = compute_center(q, qp)
    mean = np.array([3.0, 1.0]) / 4.0
    expected = mean / np.linalg.norm(mean)
    assert np.allclose(c.numpy(), expected, atol=1e-12)


def test_compute_center_zero_mean_guard():
    q = torch.tensor([[1.0, 0.0], [-1.0, 0.0]], dtype=torch.float64)
    qp = torch.tensor([[0.0, 1.0], [0.0, -1.0]], dtype=torch.float64)
    c = compute_center(q, qp)
    assert torch.isfinite(c).all()
    assert torch.linalg.vector_norm(c).item() == pytest.approx(1.0, abs=1e-9)
    assert (c != 0).all()


def test_compute_center_zero_component_guard():
    # mean lands exactly on an axis: the dead component must be nudged alive
    q = torch.tensor([[1.0, 0.0], [-1.0, 0.0]], dtype=torch.float64)
    qp = torch.tensor([[0.0, 1.0], [0.0, 1.0]], dtype=torch.float64)
    c = compute_center(q, qp)
    assert (c != 0).all()
    assert torch.linalg.vector_norm(c).item() == pytest.approx(1.0, abs=1e-9)
    assert c[1].item() == pytest.approx(1.0, abs=1e-5)


def test_projection_batch_contract():
    q = torch.randn(4, 8)
    q = q / torch.linalg.vector_norm(q, dim=1, keepdim=True)
    c = torch.zeros(8)
    c[0] = 1.0
    ProjectionBatch(q, q, c)
    with pytest.raises(ContractViolation):
        ProjectionBatch(2 * q, q, c)
    with pytest.raises(ContractViolation):
        ProjectionBatch(q, q, torch.ones(8))


def test_checkpoint_round_trip(tmp_path):
    model = _model(3)
    model.store_center(compute_center(*[torch.randn(6, 8).softmax(1) for _ in range(2)]))
    path = tmp_path / "ckpt.pt"
    save_checkpoint(model, path, extra={"seed": 3, "variant": "ROCA"})
    again, extra = load_checkpoint(path)
    assert extra == {"seed": 3, "variant": "ROCA"}
    assert again.spec == model.spec
    assert again.has_center
    assert torch.equal(again.center, model.center)
    model.eval()
    x = torch.randn(4, 16, 1)
    with torch.no_grad():
        assert torch.equal(model(x).q, again(x).q)
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "missing.pt")


def test_checkpoint_rejects_unknown_version(tmp_path):
    model = _model()
    path = tmp_path / "ckpt.pt"
    save_checkpoint(model, path)
    archive = torch.load(path, weights_only=True)
    archive["format_version"] = 99
    torch.save(archive, path)
    with pytest.raises(ConfigError, match="format"):
        load_checkpoint(path)


def test_mean_temporal_reduce_variant():
    spec = EncoderSpec(
        in_dim=1, window_length=16, channels=(8, 8), projection_dim=4,
        projector_hidden=8, temporal_reduce="mean",
    )
    model = build_model(spec, 0)
    out = model(torch.randn(3, 16, 1))
    assert out.q.shape == (3, 4)
