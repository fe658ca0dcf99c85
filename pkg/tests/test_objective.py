import numpy as np
import pytest
import torch

from meintensity.objective import (
    GradientCheckError,
    LossReport,
    LossWeights,
    apex_rank_grad,
    apex_rank_loss,
    grad_check,
    mse_grad,
    mse_loss,
    smoothness_grad,
    smoothness_loss,
    total_loss,
)
from meintensity.trajectory import triangular


def t(x):
    return torch.tensor(x, dtype=torch.float64)


def test_mse_examples():
    y = t([0.2, 0.4, 0.9])
    assert float(mse_loss(y, y)) == 0.0
    assert float(mse_loss(y + 0.1, y)) == pytest.approx(0.01, abs=1e-15)
    assert float(mse_loss(t([0.0, 1.0]), t([1.0, 0.0]))) == 1.0


def test_mse_length_mismatch():
    with pytest.raises(ValueError):
        mse_loss(t([0.0, 1.0]), t([0.0]))


def test_smoothness_examples():
    assert float(smoothness_loss(t([0.3] * 5))) == 0.0
    assert float(smoothness_loss(t([0.0, 1.0, 0.0]))) == 1.0
    ramp = t(np.linspace(0, 1, 16))
    assert float(smoothness_loss(ramp)) == pytest.approx(1 / 225, abs=1e-15)


def test_smoothness_needs_two():
    with pytest.raises(ValueError):
        smoothness_loss(t([1.0]))


def test_rank_examples():
    assert float(apex_rank_loss(t([0.0, 1.0, 0.0]), 1)) == 0.0
    assert float(apex_rank_loss(t([0.4, 0.4, 0.1]), 1)) == 1.0
    assert float(apex_rank_loss(t([0.5, 0.8, 0.2]), 1)) == pytest.approx(0.7, abs=1e-15)


@pytest.mark.parametrize("slot", [-1, 3])
def test_rank_slot_range(slot):
    with pytest.raises(ValueError):
        apex_rank_loss(t([0.1, 0.2, 0.3]), slot)


def test_rank_configurable_margin():
    assert float(apex_rank_loss(t([0.5, 0.8, 0.2]), 1, margin=0.2)) == 0.0


def test_rank_zero_iff_margin_met(rng):
    for _ in range(200):
        p = rng.uniform(-2, 2, 8)
        k = int(rng.integers(8))
        others = np.delete(p, k).max()
        zero = float(apex_rank_loss(t(p), k)) == 0.0
        assert zero == (p[k] >= others + 1)


def test_rank_never_zero_inside_unit_interval(rng):
    # A 1-margin above every other slot cannot be met by values in [0, 1]
    # unless the apex sits at exactly 1 and all others at exactly 0.
    for _ in range(200):
        p = rng.uniform(0, 1, 16)
        assert float(apex_rank_loss(t(p), int(rng.integers(16)))) > 0


def test_rank_tie_subgradient_first_index():
    p = t([0.7, 0.2, 0.7, 0.7]).requires_grad_(True)
    apex_rank_loss(p, 1).backward()
    np.testing.assert_array_equal(p.grad.numpy(), [1.0, -1.0, 0.0, 0.0])


def test_total_projection_and_weighting():
    pred, target = t([0.1, 0.6, 0.3]), t([0.0, 1.0, 0.0])
    r = total_loss(pred, target, 1, LossWeights(1.0, 0.0, 0.0))
    assert r.total == r.mse
    w = LossWeights(1.0, 0.1, 0.5)
    assert w.combine(0.04, 0.02, 0.5) == pytest.approx(0.292, abs=1e-15)
    r = total_loss(pred, target, 1, w)
    assert r.total == pytest.approx(w.lambda_mse * r.mse + w.lambda_smooth * r.smooth + w.lambda_rank * r.rank, abs=1e-12)
    assert float(r.tensor) == pytest.approx(r.total, abs=1e-12)


def test_total_on_pseudo_label_itself():
    y = t(triangular(16, 0.7).values)
    w = LossWeights(1.0, 0.1, 0.5)
    r = total_loss(y, y, int(np.argmax(y.numpy())), w, margin=0.01)
    assert r.mse == 0.0 and r.rank == 0.0
    assert r.total == pytest.approx(0.1 * float(smoothness_loss(y)), abs=1e-15)


def test_positive_homogeneity(rng):
    pred, target = t(rng.normal(size=16)), t(rng.uniform(size=16))
    w = LossWeights(1.0, 0.1, 0.5)
    base = total_loss(pred, target, 4, w).total
    for c in (0.5, 2.0, 7.0):
        assert total_loss(pred, target, 4, w.scaled(c)).total == pytest.approx(c * base, rel=1e-12)


def test_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        LossWeights(-1.0, 0.0, 0.0)


def test_batched_losses_average_clips(rng):
    p = rng.normal(size=(3, 16))
    y = rng.uniform(size=(3, 16))
    apex = [2, 7, 11]
    per_clip = [total_loss(t(p[i]), t(y[i]), apex[i]) for i in range(3)]
    batch = total_loss(t(p), t(y), apex)
    assert batch.mse == pytest.approx(np.mean([r.mse for r in per_clip]), abs=1e-12)
    assert batch.rank == pytest.approx(np.mean([r.rank for r in per_clip]), abs=1e-12)


def test_non_negative(rng):
    for _ in range(50):
        p, y = t(rng.normal(size=10)), t(rng.uniform(size=10))
        r = total_loss(p, y, int(rng.integers(10)))
        assert r.mse >= 0 and r.smooth >= 0 and r.rank >= 0


def _separated(rng, T=16):
    """Random prediction with a unique, well-separated maximum off the apex."""
    p = rng.uniform(0, 1, T)
    apex = int(rng.integers(T))
    others = np.delete(np.arange(T), apex)
    rival = int(rng.choice(others))
    p[rival] = np.delete(p, [apex, rival]).max() + 0.05
    return p, apex


def test_grad_check_autodiff_and_closed_form(rng):
    for _ in range(10):
        p = rng.normal(size=16)
        y = rng.uniform(size=16)
        assert grad_check(lambda x: mse_loss(x, t(y)), p, 1e-5) < 1e-6
        assert grad_check(lambda x: mse_loss(x, t(y)), p, 1e-5, analytic=mse_grad(p, y)) < 1e-6
        assert grad_check(smoothness_loss, p, 1e-5) < 1e-6
        assert grad_check(smoothness_loss, p, 1e-5, analytic=smoothness_grad(p)) < 1e-6
        q, apex = _separated(rng)
        assert grad_check(lambda x: apex_rank_loss(x, apex), q, 1e-5) < 1e-5
        assert grad_check(lambda x: apex_rank_loss(x, apex), q, 1e-5, analytic=apex_rank_grad(q, apex)) < 1e-5


def test_grad_check_detects_wrong_gradient(rng):
    p = rng.normal(size=8)
    with pytest.raises(GradientCheckError):
        grad_check(smoothness_loss, p, 1e-5, tolerance=1e-6, analytic=2 * smoothness_grad(p))


def test_grad_check_non_finite():
    with pytest.raises(FloatingPointError):
        grad_check(lambda x: (x / 0.0).sum(), np.ones(3))


def test_report_is_plain_data():
    r = total_loss(t([0.1, 0.5, 0.2]), t([0, 1, 0]), 1)
    assert isinstance(r, LossReport)
    assert all(isinstance(v, float) for v in (r.mse, r.smooth, r.rank, r.total))
