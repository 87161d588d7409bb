import numpy as np
import pytest

from fusedmlp.model import Gradients, MlpConfig, Precision, init_params
from fusedmlp.optim import OptimizerState, optimizer_step


def test_adam_first_step_moves_by_lr():
    # at t=1 the bias-corrected step is lr * g / (|g| + eps) = lr * sign(g)
    st = OptimizerState("adam", lr=0.01)
    w = np.array([1.0, 1.0, 1.0], np.float32)
    st.advance()
    st.update("w", w, np.array([3.0, -0.5, 1e-3], np.float32))
    np.testing.assert_allclose(w, [0.99, 1.01, 0.99], rtol=0, atol=1e-5)


def test_adam_matches_scalar_oracle():
    st = OptimizerState("adam", lr=1e-3)
    w = np.array([0.5], np.float64)
    m = v = 0.0
    ref = 0.5
    for t, g in enumerate([0.1, -0.3, 0.2, 0.05], 1):
        st.advance()
        st.update("w", w, np.array([g]))
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 1e-3 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert abs(w[0] - ref) < 1e-12


def test_sgd():
    st = OptimizerState("sgd", lr=0.5)
    w = np.ones(2, np.float32)
    st.update("w", w, np.array([1.0, -2.0], np.float32))
    np.testing.assert_array_equal(w, [0.5, 2.0])
    with pytest.raises(ValueError):
        OptimizerState("rmsprop")


def test_master_weights_accumulate_small_updates():
    cfg = MlpConfig(width=16, nlayers=2)
    p = init_params(cfg, 0)
    st = OptimizerState("sgd", lr=1e-6)
    g = Gradients([np.ones((16, 16), np.float32)])
    start = p.weights_f32()[0].copy()
    for _ in range(2000):
        p = optimizer_step(st, p, g)
    # each step is far below one bf16 ulp, yet the total moves the weights
    assert np.mean(p.weights_f32()[0] - start) < -1e-3
    assert p.weights[0].dtype == np.uint16


def test_step_rejects_wrong_count():
    p = init_params(MlpConfig(width=16, nlayers=3, precision=Precision.F32), 0)
    with pytest.raises(ValueError):
        optimizer_step(OptimizerState(), p, Gradients([np.zeros((16, 16), np.float32)]))
