"""Training objectives for the evidential classification and segmentation heads.

Per-decision terms (:func:`evidential_ce`, :func:`kl_dirichlet_uniform`) return
one value per Dirichlet; the composite losses average over pixels and batch so
their scale does not depend on image size.
"""
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import ConfigurationError, InvalidInputError
from .evidential import EvidenceMap, DirichletParams, as_tensor, expected_probability

DICE_SMOOTH = 1.0


@dataclass(frozen=True)
class AnnealSchedule:
    max_value: float = 1.0
    ramp_epochs: int = 10

    def __post_init__(self):
        if self.ramp_epochs <= 0:
            raise ConfigurationError("ramp_epochs must be positive")
        if self.max_value < 0:
            raise ConfigurationError("max_value must be non-negative")


@dataclass(frozen=True)
class LossWeights:
    """Weights of the total objective and the coefficients inside each term.

    ``lambda_m1`` and ``lambda_c`` are the values reached at the end of the KL
    warm-up; the harness scales them with :func:`anneal`.
    """

    w_m: float = 0.1
    w_c: float = 0.5
    w_s: float = 0.4
    lambda_m1: float = 1.0
    lambda_m2: float = 1.0
    lambda_c: float = 1.0

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value >= 0:
                raise ConfigurationError(f"{name} must be non-negative, got {value}")
        for name in ("w_m", "w_c", "w_s"):
            if getattr(self, name) > 1:
                raise ConfigurationError(f"{name} must lie in [0, 1]")


def anneal(epoch, schedule):
    if epoch < 0:
        raise ConfigurationError("epoch must be non-negative")
    if schedule.ramp_epochs <= 0:
        raise ConfigurationError("ramp_epochs must be positive")
    return schedule.max_value * min(1.0, epoch / schedule.ramp_epochs)


def _alpha_of(params):
    if isinstance(params, (DirichletParams, EvidenceMap)):
        return params.alpha
    return as_tensor(params)


def _check_alpha(alpha):
    if not bool(torch.isfinite(alpha).all()) or bool((alpha < 1).any()):
        raise InvalidInputError("Dirichlet parameters must be finite and >= 1")


def _check_one_hot(y, dim):
    if bool(((y != 0) & (y != 1)).any()) or not bool((y.sum(dim=dim) == 1).all()):
        raise InvalidInputError("target is not one-hot along the class axis")


def one_hot(labels, n_classes, dim=-1, dtype=torch.float64):
    labels = torch.as_tensor(labels)
    if labels.dtype.is_floating_point:
        raise InvalidInputError("labels must be integers")
    if bool((labels < 0).any()) or bool((labels >= n_classes).any()):
        raise InvalidInputError(f"labels must lie in [0, {n_classes})")
    out = F.one_hot(labels.long(), n_classes).to(dtype)
    return out.movedim(-1, dim) if dim != -1 else out


def _target(y, alpha, dim):
    """Integer labels or one-hot targets -> validated one-hot like ``alpha``."""
    y = torch.as_tensor(y)
    if y.dim() == alpha.dim() - 1 and not y.dtype.is_floating_point:
        y = one_hot(y, alpha.shape[dim], dim=dim, dtype=alpha.dtype)
    else:
        y = y.to(alpha.dtype)
        _check_one_hot(y, dim)
    if y.shape != alpha.shape:
        raise InvalidInputError(f"target shape {tuple(y.shape)} != alpha shape {tuple(alpha.shape)}")
    return y


def adjusted_alpha(alpha, y, dim=-1):
    """Reset the true-class entry to 1 so the KL term only penalises misleading evidence."""
    alpha = _alpha_of(alpha)
    y = _target(y, alpha, dim)
    return y + (1 - y) * alpha


def kl_dirichlet_uniform(alpha, dim=-1):
    """KL(Dir(alpha) || Dir(1, ..., 1)), one value per Dirichlet along ``dim``."""
    alpha = _alpha_of(alpha)
    _check_alpha(alpha)
    k = alpha.shape[dim]
    strength = alpha.sum(dim=dim, keepdim=True)
    log_norm = (
        torch.lgamma(strength).squeeze(dim)
        - torch.lgamma(alpha).sum(dim=dim)
        - torch.lgamma(torch.tensor(float(k), dtype=alpha.dtype))
    )
    digamma_term = ((alpha - 1) * (torch.digamma(alpha) - torch.digamma(strength))).sum(dim=dim)
    return log_norm + digamma_term


def evidential_ce(alpha, y, dim=-1):
    """Expected cross-entropy under Dir(alpha): sum_k y_k (psi(T) - psi(alpha_k))."""
    alpha = _alpha_of(alpha)
    _check_alpha(alpha)
    y = _target(y, alpha, dim)
    strength = alpha.sum(dim=dim, keepdim=True)
    return (y * (torch.digamma(strength) - torch.digamma(alpha))).sum(dim=dim)


def soft_dice_loss(probs, y_mask, eps=DICE_SMOOTH):
    """``1 - mean_q (2|p*g| + eps) / (|p| + |g| + eps)``, averaged over the batch.

    ``probs`` is ``(Q, H, W)`` or ``(B, Q, H, W)``; ``y_mask`` the matching label map.
    """
    probs = as_tensor(probs)
    squeeze = probs.dim() == 3
    if squeeze:
        probs = probs.unsqueeze(0)
    y_mask = torch.as_tensor(y_mask)
    if y_mask.dim() == 2:
        y_mask = y_mask.unsqueeze(0)
    if probs.dim() != 4 or y_mask.shape != probs.shape[:1] + probs.shape[2:]:
        raise InvalidInputError(
            f"mask shape {tuple(y_mask.shape)} does not match predictions {tuple(probs.shape)}"
        )
    target = one_hot(y_mask, probs.shape[1], dim=1, dtype=probs.dtype)
    inter = (probs * target).sum(dim=(2, 3))
    denom = probs.sum(dim=(2, 3)) + target.sum(dim=(2, 3))
    dice = (2 * inter + eps) / (denom + eps)
    return (1 - dice.mean(dim=1)).mean()


def evidential_dice(alpha_map, y_mask):
    """Soft Dice loss on the Dirichlet means of a per-pixel evidence map."""
    if not isinstance(alpha_map, EvidenceMap):
        alpha = as_tensor(alpha_map)
        alpha_map = EvidenceMap(alpha, alpha.sum(dim=-3))
    _check_alpha(alpha_map.alpha)
    return soft_dice_loss(expected_probability(alpha_map), y_mask)


def mutual_loss(alpha_map, y_mask, lambda_m1, lambda_m2):
    """Per-pixel evidential CE + lambda_m1 * masked KL + lambda_m2 * evidential Dice."""
    if lambda_m1 < 0 or lambda_m2 < 0:
        raise ConfigurationError("loss coefficients must be non-negative")
    alpha = _alpha_of(alpha_map)
    y = _target(y_mask, alpha, dim=-3)
    ce = evidential_ce(alpha, y, dim=-3).mean()
    loss = ce
    if lambda_m1:
        loss = loss + lambda_m1 * kl_dirichlet_uniform(adjusted_alpha(alpha, y, dim=-3), dim=-3).mean()
    if lambda_m2:
        loss = loss + lambda_m2 * evidential_dice(alpha, y.argmax(dim=-3))
    return loss


def classification_loss(alpha, y, lambda_c):
    """Evidential CE plus ``lambda_c`` times the masked KL, averaged over the batch."""
    if lambda_c < 0:
        raise ConfigurationError("lambda_c must be non-negative")
    alpha = _alpha_of(alpha)
    y = _target(y, alpha, dim=-1)
    loss = evidential_ce(alpha, y)
    if lambda_c:
        loss = loss + lambda_c * kl_dirichlet_uniform(adjusted_alpha(alpha, y))
    return loss.mean()


def upsample_nearest(x, factor):
    if factor == 1:
        return x
    return x.repeat_interleave(factor, dim=-2).repeat_interleave(factor, dim=-1)


def deep_supervision_loss(s_list, y_mask):
    """Mean soft-Dice loss over the four decoder scales.

    ``s_list[i]`` holds logits at ``1 / 2**i`` of full resolution; each is
    softmaxed and upsampled by nearest neighbour before comparison.
    """
    if len(s_list) != 4:
        raise ConfigurationError(f"expected 4 decoder scales, got {len(s_list)}")
    y_mask = torch.as_tensor(y_mask)
    height, width = y_mask.shape[-2:]
    losses = []
    for i, s in enumerate(s_list):
        s = as_tensor(s)
        factor = 2**i
        if s.shape[-2] * factor != height or s.shape[-1] * factor != width:
            raise ConfigurationError(
                f"scale {i + 1} has size {tuple(s.shape[-2:])}, expected "
                f"{(height // factor, width // factor)}"
            )
        probs = upsample_nearest(torch.softmax(s, dim=-3), factor)
        losses.append(soft_dice_loss(probs, y_mask))
    return sum(losses) / 4


def total_loss(mutual, cls, seg, weights=LossWeights()):
    return weights.w_m * mutual + weights.w_c * cls + weights.w_s * seg
