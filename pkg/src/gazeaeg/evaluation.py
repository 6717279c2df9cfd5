"""Agreement metrics and the paired significance test."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.special import betainc


class MetricContractError(ValueError):
    pass


class DegenerateVarianceError(ValueError):
    pass


def qwk(gold: Sequence[int], pred: Sequence[int], min_rating: int, max_rating: int) -> float:
    """Quadratic weighted kappa over the fixed rating range [min_rating, max_rating]."""
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.shape != pred.shape or gold.ndim != 1 or gold.size == 0:
        raise MetricContractError("gold and pred must be non-empty sequences of equal length")
    if min_rating > max_rating:
        raise MetricContractError("min_rating exceeds max_rating")
    for name, v in (("gold", gold), ("pred", pred)):
        if v.min() < min_rating or v.max() > max_rating:
            raise MetricContractError(f"{name} has ratings outside [{min_rating}, {max_rating}]")
    C = max_rating - min_rating + 1
    if C == 1:
        return 1.0
    observed = np.zeros((C, C))
    np.add.at(observed, (gold - min_rating, pred - min_rating), 1.0)
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0)) / gold.size
    idx = np.arange(C)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (C - 1) ** 2
    num = (weights * observed).sum()
    den = (weights * expected).sum()
    if den == 0.0:
        # both raters constant on the same category
        return 1.0
    return float(1.0 - num / den)


def correct_close(gold: Sequence[int], pred: Sequence[int]) -> tuple[int, int]:
    if len(gold) != len(pred):
        raise MetricContractError("gold and pred differ in length")
    diff = np.abs(np.asarray(gold, dtype=np.int64) - np.asarray(pred, dtype=np.int64))
    return int((diff == 0).sum()), int((diff <= 1).sum())


def student_t_sf2(t: float, df: int) -> float:
    """Two-sided tail probability P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def paired_ttest_2tailed(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricContractError("x and y must be 1-D sequences of equal length")
    n = x.size
    if n < 2:
        raise MetricContractError("paired t-test needs at least two pairs")
    d = x - y
    if not d.any():
        return 0.0, 1.0
    sd = d.std(ddof=1)
    if sd == 0.0:
        raise DegenerateVarianceError("differences have zero variance but non-zero mean")
    t = d.mean() / (sd / math.sqrt(n))
    return float(t), student_t_sf2(float(t), n - 1)
