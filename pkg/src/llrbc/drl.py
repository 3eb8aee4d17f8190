"""Multi-start REINFORCE loss with a shared per-instance baseline."""

from __future__ import annotations

import torch


def drl_loss(log_prob: torch.Tensor, length: torch.Tensor) -> torch.Tensor:
    """REINFORCE loss for a (B, N) block of multi-start rollouts.

    ``log_prob`` holds the summed log-probability of each trajectory and
    ``length`` its tour length; rewards are ``-length`` and the baseline is
    the mean reward over the N rollouts of the same instance.
    """
    if log_prob.numel() == 0:
        raise ValueError("empty rollout batch")
    if log_prob.shape != length.shape or log_prob.dim() != 2:
        raise ValueError("expected matching (B, N) tensors")
    reward = -length.detach()
    advantage = reward - reward.mean(dim=1, keepdim=True)
    return -(advantage * log_prob).mean()
