import pytest
import torch

from llrbc.drl import drl_loss


def test_hand_evaluated_example():
    # rewards -3, -5 -> baseline -4 -> advantages +1, -1
    logp = torch.tensor([[-1.3, -0.4]], dtype=torch.float64)
    length = torch.tensor([[3.0, 5.0]], dtype=torch.float64)
    expected = -0.5 * (1.0 * -1.3 + (-1.0) * -0.4)
    assert drl_loss(logp, length).item() == pytest.approx(expected, abs=1e-15)


def test_equal_rewards_give_zero_gradient():
    logp = torch.randn(3, 4, dtype=torch.float64, requires_grad=True)
    drl_loss(logp, torch.full((3, 4), 2.5, dtype=torch.float64)).backward()
    assert torch.all(logp.grad == 0)


def test_single_start_is_degenerate_zero():
    logp = torch.tensor([[-2.0]], dtype=torch.float64)
    assert drl_loss(logp, torch.tensor([[4.0]], dtype=torch.float64)).item() == 0.0


def test_baseline_invariance():
    g = torch.Generator().manual_seed(0)
    base = torch.randn(4, 6, dtype=torch.float64, generator=g)
    length = torch.rand(4, 6, dtype=torch.float64, generator=g) + 2
    shift = torch.randn(4, 1, dtype=torch.float64, generator=g)
    grads = []
    for lens in (length, length + shift):
        logp = base.clone().requires_grad_(True)
        drl_loss(logp, lens).backward()
        grads.append(logp.grad)
    torch.testing.assert_close(grads[0], grads[1], rtol=0, atol=1e-10)


def test_advantages_detached_from_length():
    logp = torch.randn(2, 3, dtype=torch.float64, requires_grad=True)
    length = torch.rand(2, 3, dtype=torch.float64, requires_grad=True)
    drl_loss(logp, length).backward()
    assert length.grad is None


def test_empty_and_bad_shapes():
    with pytest.raises(ValueError):
        drl_loss(torch.zeros(0, 3), torch.zeros(0, 3))
    with pytest.raises(ValueError):
        drl_loss(torch.zeros(2, 3), torch.zeros(3, 2))
