"""Subjective-logic opinions built from Dirichlet evidence.

Evidence is non-negative, ``alpha = evidence + 1``, the Dirichlet strength is
``T = sum(alpha)``, beliefs are ``evidence / T`` and the uncertainty mass is
``n_classes / T``.  Beliefs plus uncertainty sum to one.

Classification tensors carry the class axis last (``(..., K)``); segmentation
maps carry it third from last (``(..., Q, H, W)``), so both work batched.
"""
from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigurationError, InvalidInputError

__all__ = [
    "DirichletParams",
    "Opinion",
    "EvidenceMap",
    "OpinionMap",
    "as_tensor",
    "softplus_evidence",
    "classification_opinion",
    "segmentation_opinion",
    "expected_probability",
]


def as_tensor(x, dtype=None):
    """Tensors pass through untouched; anything else becomes float64."""
    if isinstance(x, torch.Tensor):
        return x if dtype is None else x.to(dtype)
    return torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=dtype or torch.float64)


@dataclass(frozen=True)
class DirichletParams:
    alpha: torch.Tensor
    strength: torch.Tensor

    @property
    def n_classes(self):
        return self.alpha.shape[-1]


@dataclass(frozen=True)
class Opinion:
    beliefs: torch.Tensor
    uncertainty: torch.Tensor


@dataclass(frozen=True)
class EvidenceMap:
    """Per-pixel Dirichlet parameters; ``alpha`` is ``(..., Q, H, W)``."""

    alpha: torch.Tensor
    strength: torch.Tensor

    @property
    def n_classes(self):
        return self.alpha.shape[-3]


@dataclass(frozen=True)
class OpinionMap:
    beliefs: torch.Tensor
    uncertainty: torch.Tensor


def softplus_evidence(logits):
    """``log(1 + exp(x))`` evaluated without overflow; rejects NaN/inf."""
    logits = as_tensor(logits)
    if not bool(torch.isfinite(logits).all()):
        raise InvalidInputError("logits contain non-finite values")
    return torch.clamp(logits, min=0) + torch.log1p(torch.exp(-logits.abs()))


def _check_evidence(evidence):
    if not bool(torch.isfinite(evidence).all()) or bool((evidence < 0).any()):
        raise InvalidInputError("evidence must be finite and non-negative")


def _check_n_classes(n, got, what):
    if n is None:
        return got
    n = int(n)
    if n < 2:
        raise ConfigurationError(f"{what} needs at least 2 classes, got {n}")
    if got != n:
        raise ConfigurationError(f"{what}: expected {n} classes, evidence has {got}")
    return n


def classification_opinion(evidence, n_classes=None):
    """Dirichlet parameters and image-level opinion from ``(..., K)`` evidence."""
    evidence = as_tensor(evidence)
    if evidence.dim() == 0:
        raise ConfigurationError("evidence must have a class axis")
    k = _check_n_classes(n_classes, evidence.shape[-1], "classification_opinion")
    if k < 2:
        raise ConfigurationError("at least 2 classes required")
    _check_evidence(evidence)
    alpha = evidence + 1.0
    strength = alpha.sum(dim=-1)
    beliefs = evidence / strength.unsqueeze(-1)
    uncertainty = k / strength
    return DirichletParams(alpha, strength), Opinion(beliefs, uncertainty)


def segmentation_opinion(evidence_map, n_classes=None):
    """Per-pixel version of :func:`classification_opinion` for ``(..., Q, H, W)``."""
    evidence_map = as_tensor(evidence_map)
    if evidence_map.dim() < 3:
        raise ConfigurationError("evidence map must be (..., Q, H, W)")
    q = _check_n_classes(n_classes, evidence_map.shape[-3], "segmentation_opinion")
    if q < 2:
        raise ConfigurationError("at least 2 classes required")
    _check_evidence(evidence_map)
    alpha = evidence_map + 1.0
    strength = alpha.sum(dim=-3)
    beliefs = evidence_map / strength.unsqueeze(-3)
    uncertainty = q / strength
    return EvidenceMap(alpha, strength), OpinionMap(beliefs, uncertainty)


def expected_probability(params):
    """Dirichlet mean ``alpha / T``.

    Accepts :class:`DirichletParams` (class axis last), :class:`EvidenceMap`
    (class axis at -3) or a raw alpha vector.
    """
    if isinstance(params, EvidenceMap):
        return params.alpha / params.strength.unsqueeze(-3)
    if isinstance(params, DirichletParams):
        return params.alpha / params.strength.unsqueeze(-1)
    alpha = as_tensor(params)
    return alpha / alpha.sum(dim=-1, keepdim=True)

