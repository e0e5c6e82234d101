"""Targeted logit-gap loss over Monte-Carlo samples."""
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ghostflare.exceptions import DimMismatch, EmptySamples
from ghostflare.models.classifier import Classifier


@dataclass
class AdvLoss:
    """
    Attributes:
        value (float): max(-kappa, max_{i != t} E[Z_i] - E[Z_t]).
        mean_logits (np.ndarray): E[Z] over the samples.
        target (int): Class the attack aims for.
        competitor (int): Strongest non-target class (lowest index on ties).
        cotangents (np.ndarray): d value / d Z(y_j), one row per sample.
    """

    value: float
    mean_logits: np.ndarray
    target: int
    competitor: int
    cotangents: np.ndarray

    @property
    def gap(self) -> float:
        """Target logit minus the strongest other logit (positive when the target wins)."""
        return float(self.mean_logits[self.target] - self.mean_logits[self.competitor])


def logit_gap_loss(logits: np.ndarray, target: int, kappa: float) -> AdvLoss:
    """Loss and per-sample cotangents from a (T, m) stack of sample logits."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise EmptySamples("The logit expectation needs at least one sample")
    trials, m = logits.shape
    if not 0 <= target < m or m < 2:
        raise DimMismatch(f"Target {target} is not one of {m} classes")

    mean = logits.mean(axis=0)
    others = mean.copy()
    others[target] = -np.inf
    competitor = int(np.argmax(others))
    shortfall = float(mean[competitor] - mean[target])

    cotangents = np.zeros_like(logits)
    if shortfall <= -kappa:
        value = -float(kappa)
    else:
        value = shortfall
        cotangents[:, competitor] = 1.0 / trials
        cotangents[:, target] = -1.0 / trials
    return AdvLoss(value, mean, target, competitor, cotangents)


def adv_loss(model: Classifier, samples: Sequence[np.ndarray], target: int, kappa: float) -> AdvLoss:
    """The loss for perceived images y_j, classified as one batch."""
    if len(samples) == 0:
        raise EmptySamples("The logit expectation needs at least one sample")
    return logit_gap_loss(model.batch_logits(np.stack(samples)), target, kappa)
