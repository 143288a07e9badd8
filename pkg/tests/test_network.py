import numpy as np
import pytest

from thermopinn import autodiff
from thermopinn.network import (
    NetworkParams, ParallelModel, checkpoint_bytes, init_kaiming, kaiming_network,
    layered_prediction, load_checkpoint, predict_temperature, save_checkpoint, zero_model,
)


def test_same_seed_bit_identical():
    a, b = init_kaiming(0), init_kaiming(0)
    assert a.flat().tobytes() == b.flat().tobytes()
    assert init_kaiming(1).flat().tobytes() != a.flat().tobytes()


def test_subnetworks_use_distinct_streams():
    m = init_kaiming(3)
    assert len({n.flat.tobytes() for n in m.nets}) == 3
    assert m.routing == (0, 1, 2) and m.parallel
    s = init_kaiming(3, shared=True)
    assert len(s.nets) == 1 and s.routing == (0, 0, 0) and not s.parallel


def test_biases_zero():
    for n in init_kaiming(11).nets:
        assert all(not np.any(b) for b in n.biases)


def test_first_layer_std_monte_carlo():
    # 10^4 independent draws of the 20 first-layer weights; target sqrt(2 / 2) = 1
    samples = np.concatenate([
        kaiming_network(np.random.default_rng(s)).weights[0].ravel() for s in range(10_000)
    ])
    assert samples.std() == pytest.approx(1.0, rel=0.05)
    hidden = np.concatenate([
        kaiming_network(np.random.default_rng(s)).weights[2].ravel() for s in range(500)
    ])
    assert hidden.std() == pytest.approx(np.sqrt(0.2), rel=0.05)


def test_zero_model_predicts_zero(env):
    assert predict_temperature(zero_model(), "msr", 1.0, 30.0, env) == 0.0


def test_span_guard(env):
    m = init_kaiming(0)
    with pytest.raises(ValueError, match="span"):
        predict_temperature(m, "shl", 3.0, 1.0, env)
    with pytest.raises(ValueError, match="unknown layer"):
        predict_temperature(m, "core", 0.1, 1.0, env)
    # interface abscissa belongs to both neighbours
    predict_temperature(m, "shl", 0.6, 1.0, env)
    predict_temperature(m, "msr", 0.6, 1.0, env)


def test_perturbing_one_network_leaves_others(env):
    m = init_kaiming(5)
    x = {"msr": np.linspace(0.6, 1.45, 9), "lin": np.linspace(1.45, 5.05, 9)}
    before = {k: predict_temperature(m, k, v, np.full(9, 10.0), env) for k, v in x.items()}
    m.shl.flat[:] += 0.5
    for k, v in x.items():
        assert predict_temperature(m, k, v, np.full(9, 10.0), env).tobytes() == \
            before[k].tobytes()


def test_layered_prediction_shape(grid):
    out = layered_prediction(init_kaiming(0), grid.x_nodes, grid.t_nodes)
    assert out["shl"].shape == (301, 51)
    assert out["msr"].shape == (301, 71)
    assert out["lin"].shape == (301, 201)
    i, j = 17, 4
    direct = autodiff.forward_batch(init_kaiming(0).lin.flat, grid.x_nodes["lin"][j],
                                    grid.t_nodes[i])[0, 0]
    assert out["lin"][i, j] == direct


def test_checkpoint_roundtrip(tmp_path):
    m = init_kaiming(9)
    p = save_checkpoint(m, tmp_path / "a.bin")
    m2 = load_checkpoint(p)
    assert m2.seed == 9 and m2.routing == (0, 1, 2)
    save_checkpoint(m2, tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    shared = init_kaiming(2, shared=True)
    assert load_checkpoint(save_checkpoint(shared, tmp_path / "s.bin")).routing == (0, 0, 0)


def test_checkpoint_layout_and_corruption(tmp_path):
    m = init_kaiming(1)
    data = checkpoint_bytes(m)
    head, _, body = data.partition(b"\nend\n")
    assert head.decode().splitlines()[0] == "thermopinn-checkpoint 1"
    assert np.frombuffer(body, "<f8").tobytes() == m.flat().astype("<f8").tobytes()
    p = tmp_path / "t.bin"
    p.write_bytes(data[:-8])
    with pytest.raises(ValueError, match="expected"):
        load_checkpoint(p)
    p.write_bytes(b"garbage")
    with pytest.raises(ValueError):
        load_checkpoint(p)


def test_model_validation():
    with pytest.raises(ValueError):
        NetworkParams(np.zeros(10))
    n = NetworkParams.zeros()
    with pytest.raises(ValueError, match="share"):
        ParallelModel((n, n, n))
    with pytest.raises(ValueError, match="routing"):
        ParallelModel((NetworkParams.zeros(),), (0, 1, 2))


def test_with_flat_copies():
    m = init_kaiming(4)
    flat = m.flat()
    m2 = m.with_flat(flat)
    flat[:] = 0
    assert np.any(m2.flat())
