"""
Training objectives.

Clone cross-entropy on victim hard labels, the GAN real/fake terms, the class-diversity
term computed from clone confidences, the composite generator/discriminator losses, and
the soft-label distillation losses (L1 on estimated logits, KL on probabilities).

All logs are natural logs. Probabilities are clamped before logs: 1e-7 for
discriminator outputs, 1e-12 for victim/clone probabilities; every clamp is logged.
"""

from dataclasses import dataclass, field
from typing import Dict, Tuple, Union

import torch
import torch.nn.functional as F
from loguru import logger

from dfms.core.errors import InvariantError

D_CLAMP = 1e-7
PROB_CLAMP = 1e-12

Scalar = Union[float, torch.Tensor]


@dataclass
class DiversityBatchStats:
    """Batch-mean clone confidences ``alpha`` over ``k`` classes for ``n`` samples."""

    alpha: torch.Tensor
    n: int
    k: int


@dataclass
class LossReport:
    """A composite loss with its named terms.

    ``value`` keeps the autograd graph when built from tensors; ``components`` are
    plain floats for logging.
    """

    name: str
    value: Scalar
    components: Dict[str, float] = field(default_factory=dict)

    def scalar(self) -> float:
        return float(self.value.detach()) if isinstance(self.value, torch.Tensor) else float(self.value)

    def as_row(self, step: int) -> Dict[str, object]:
        parts = ";".join(f"{k}={v:.8g}" for k, v in self.components.items())
        return {"step": step, "loss": self.name, "value": self.scalar(), "components": parts}


def _as_float(x: Scalar) -> float:
    return float(x.detach()) if isinstance(x, torch.Tensor) else float(x)


def _row_tolerance(p: torch.Tensor) -> float:
    return 1e-6 if p.dtype == torch.float64 else 1e-4


def _check_probability_rows(p: torch.Tensor, what: str) -> None:
    if p.dim() != 2:
        raise InvariantError(f"{what} must be (N, K), got shape {tuple(p.shape)}")
    with torch.no_grad():
        if bool((p < 0).any()):
            raise InvariantError(f"{what} has negative entries")
        err = (p.sum(dim=1) - 1.0).abs().max() if p.shape[0] else torch.tensor(0.0)
        if float(err) > _row_tolerance(p):
            raise InvariantError(f"{what} rows must sum to 1, max deviation {float(err):.3g}")


def _clamp_logged(x: torch.Tensor, low: float, high: float, what: str) -> torch.Tensor:
    with torch.no_grad():
        n_clamped = int(((x < low) | (x > high)).sum())
    if n_clamped:
        logger.warning(f"Clamped {n_clamped} {what} value(s) into [{low:g}, {high:g}]")
    return x.clamp(low, high)


def clone_ce_loss(clone_scores: torch.Tensor, hard_labels: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy of clone scores ``(N, K)`` against victim labels ``(N,)``."""
    k = clone_scores.shape[1]
    if hard_labels.numel() and (int(hard_labels.min()) < 0 or int(hard_labels.max()) >= k):
        raise InvariantError(f"labels must lie in [0, {k})")
    return F.cross_entropy(clone_scores, hard_labels.long())


def adv_losses(d_real: torch.Tensor, d_fake: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Adversarial terms ``(mean log D(x), mean log(1 - D(G(z))))``.

    The discriminator ascends their sum, the generator descends the second.
    """
    d_real = _clamp_logged(d_real, D_CLAMP, 1.0 - D_CLAMP, "discriminator(real)")
    return torch.log(d_real).mean(), adv_fake_loss(d_fake)


def adv_fake_loss(d_fake: torch.Tensor) -> torch.Tensor:
    """The generator's adversarial term alone: ``mean log(1 - D(G(z)))``."""
    d_fake = _clamp_logged(d_fake, D_CLAMP, 1.0 - D_CLAMP, "discriminator(fake)")
    return torch.log1p(-d_fake).mean()


def diversity_batch_stats(clone_softmax: torch.Tensor) -> DiversityBatchStats:
    _check_probability_rows(clone_softmax, "clone softmax")
    n, k = clone_softmax.shape
    return DiversityBatchStats(alpha=clone_softmax.mean(dim=0), n=n, k=k)


def class_diversity_loss(clone_softmax: torch.Tensor) -> torch.Tensor:
    """Negative entropy of the batch-mean clone confidences.

    ``sum_j alpha_j log alpha_j`` with ``0 log 0 = 0``; lies in ``[-log K, 0]`` and is
    minimal when the batch spreads evenly across classes.
    """
    alpha = diversity_batch_stats(clone_softmax).alpha
    return torch.xlogy(alpha, alpha).sum()


def generator_loss(l_adv_fake: Scalar, l_class_div: Scalar, lambda_div: float) -> LossReport:
    """``L_G = L_adv_fake + lambda_div * L_class_div``."""
    if lambda_div < 0:
        raise InvariantError(f"lambda_div must be >= 0, got {lambda_div}")
    value = l_adv_fake + lambda_div * l_class_div
    return LossReport(
        name="generator",
        value=value,
        components={
            "adv_fake": _as_float(l_adv_fake),
            "class_div": _as_float(l_class_div),
            "lambda_div": float(lambda_div),
        },
    )


def discriminator_loss(l_adv_real: Scalar, l_adv_fake: Scalar) -> LossReport:
    """``L_D = L_adv_real + L_adv_fake``; the discriminator step descends ``-L_D``."""
    return LossReport(
        name="discriminator",
        value=l_adv_real + l_adv_fake,
        components={"adv_real": _as_float(l_adv_real), "adv_fake": _as_float(l_adv_fake)},
    )


def victim_logit_estimate(victim_softmax: torch.Tensor) -> torch.Tensor:
    """Recover mean-centred logits from probabilities: ``log p - mean(log p)`` per row."""
    _check_probability_rows(victim_softmax, "victim softmax")
    log_p = torch.log(_clamp_logged(victim_softmax, PROB_CLAMP, 1.0, "victim probability"))
    return log_p - log_p.mean(dim=1, keepdim=True)


def l1_logit_loss(victim_softmax: torch.Tensor, clone_logits: torch.Tensor) -> torch.Tensor:
    """Batch mean of the per-sample L1 distance between estimated victim logits and clone logits."""
    if victim_softmax.shape != clone_logits.shape:
        raise InvariantError(
            f"victim {tuple(victim_softmax.shape)} and clone {tuple(clone_logits.shape)} shapes differ"
        )
    target = victim_logit_estimate(victim_softmax).detach()
    return (target - clone_logits).abs().sum(dim=1).mean()


def kl_distill_loss(victim_softmax: torch.Tensor, clone_softmax: torch.Tensor) -> torch.Tensor:
    """Batch mean of ``KL(V || C) = sum_i V_i log(V_i / C_i)``."""
    if victim_softmax.shape != clone_softmax.shape:
        raise InvariantError(
            f"victim {tuple(victim_softmax.shape)} and clone {tuple(clone_softmax.shape)} shapes differ"
        )
    _check_probability_rows(victim_softmax, "victim softmax")
    _check_probability_rows(clone_softmax, "clone softmax")
    v = victim_softmax.detach()
    log_c = torch.log(_clamp_logged(clone_softmax, PROB_CLAMP, 1.0, "clone probability"))
    return (torch.xlogy(v, v) - v * log_c).sum(dim=1).mean()
