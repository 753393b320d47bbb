"""Run-to-run comparison scores."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ganglion import SpikeTrain


class UndefinedMetricError(ValueError):
    """The score is undefined for the given input (for example a constant trace)."""


def _pair(ref, test) -> tuple[np.ndarray, np.ndarray]:
    ref = np.asarray(ref, dtype=np.float64).ravel()
    test = np.asarray(test, dtype=np.float64).ravel()
    if ref.shape != test.shape:
        raise ValueError(f"trace lengths differ: {ref.size} vs {test.size}")
    if ref.size < 2:
        raise ValueError("traces need at least two samples")
    return ref, test


def variance_explained(ref, test) -> float:
    """``1 - sum((ref - test)**2) / sum((ref - mean(ref))**2)``."""
    ref, test = _pair(ref, test)
    ss_tot = float(np.sum((ref - ref.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedMetricError("reference trace is constant")
    return 1.0 - float(np.sum((ref - test) ** 2)) / ss_tot


def xcorr_peak_lag(ref, test, max_lag: int) -> int:
    """Lag of ``test`` behind ``ref`` maximising the normalised cross-correlation.

    A positive lag means ``test`` is delayed.  Both traces are mean-removed
    and normalised by their zero-lag energies.  Ties go to the smallest
    ``|lag|``, then to the negative lag.
    """
    ref, test = _pair(ref, test)
    n = ref.size
    if not 0 <= max_lag < n / 2:
        raise ValueError(f"max_lag must lie in [0, {n / 2}), got {max_lag}")
    r = ref - ref.mean()
    t = test - test.mean()
    norm = np.sqrt(np.dot(r, r) * np.dot(t, t))
    if norm == 0.0:
        raise UndefinedMetricError("cross-correlation of a constant trace")
    full = np.correlate(t, r, mode="full") / norm   # index n-1 is lag 0
    order = sorted(range(-max_lag, max_lag + 1), key=lambda k: (abs(k), k))
    best_lag, best = order[0], full[n - 1 + order[0]]
    for lag in order[1:]:
        v = full[n - 1 + lag]
        # a later candidate must beat the incumbent by more than rounding noise
        if v > best + 1e-12 * max(1.0, abs(best)):
            best_lag, best = lag, v
    return best_lag


def _groups(spikes: SpikeTrain) -> dict[tuple[int, int, int], np.ndarray]:
    if not len(spikes):
        return {}
    order = np.lexsort((spikes.frame, spikes.x, spikes.y, spikes.polarity))
    keys = np.stack([spikes.polarity[order].astype(np.int64), spikes.y[order], spikes.x[order]], 1)
    frames = spikes.frame[order]
    cut = np.flatnonzero(np.any(keys[1:] != keys[:-1], axis=1)) + 1
    starts = np.concatenate([[0], cut])
    return {tuple(keys[s]): f for s, f in zip(starts, np.split(frames, cut))}


def _greedy_matches(a: np.ndarray, b: np.ndarray, slack: int) -> int:
    # Earliest-available one-to-one matching of sorted spike times.
    matched, j, nb = 0, 0, len(b)
    for t in a.tolist():
        while j < nb and b[j] < t - slack:
            j += 1
        if j < nb and b[j] <= t + slack:
            matched += 1
            j += 1
    return matched


def spike_agreement(a: SpikeTrain, b: SpikeTrain, slack: int = 1) -> float:
    """Fraction of spikes in ``a`` matched by a spike of ``b`` at the same pixel
    and polarity within ``slack`` frames, one-to-one in time order.

    An empty ``a`` scores 1.0 when ``b`` is empty too, else 0.0.
    """
    if slack < 0:
        raise ValueError("slack must be non-negative")
    if not len(a):
        return 1.0 if not len(b) else 0.0
    gb = _groups(b)
    matched = 0
    for key, frames in _groups(a).items():
        other = gb.get(key)
        if other is not None:
            matched += _greedy_matches(frames, other, slack)
    return matched / len(a)


@dataclass(frozen=True)
class TraceComparison:
    variance_explained: float
    best_lag: int
    rms_error: float

    @classmethod
    def of(cls, ref, test, max_lag: int = 20) -> "TraceComparison":
        ref, test = _pair(ref, test)
        max_lag = min(max_lag, (ref.size - 1) // 2)
        return cls(variance_explained(ref, test), xcorr_peak_lag(ref, test, max_lag),
                   float(np.sqrt(np.mean((ref - test) ** 2))))
