"""Temporal h-hop neighbourhoods N_h(T) and the empirical forward-success pipeline."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analytics import p_h_from_neighborhood
from .trace import ContactTrace, sample_windows

INF = math.inf


def hop_labels(trace: ContactTrace, source: int, t0: float, t_window: float, h_max=INF) -> list:
    """Final hop label of every node after sweeping the window (``inf`` = unreached).

    On a contact between labels l_u < l_v the larger becomes l_u + 1 whenever
    l_u < h_max and l_v > l_u + 1.  Contacts active at the same instant are
    relaxed to a fixpoint, which lets a label gained mid-contact cross any
    other contact that is still open.
    """
    if not (0 <= source < trace.n_nodes):
        raise IndexError(f"source {source} outside 0..{trace.n_nodes - 1}")
    t1 = t0 + t_window
    labels = [INF] * trace.n_nodes
    labels[source] = 0
    window = trace.window(t0, t1)
    if not window:
        return labels
    window.sort(key=lambda e: (max(e.start, t0), e.a, e.b))
    active = []
    k = 0
    while k < len(window):
        tau = max(window[k].start, t0)
        while k < len(window) and max(window[k].start, t0) == tau:
            active.append(window[k])
            k += 1
        active = [e for e in active if e.active_at(tau)]
        active.sort(key=lambda e: (e.a, e.b))
        changed = True
        while changed:
            changed = False
            for e in active:
                la, lb = labels[e.a], labels[e.b]
                if la < lb:
                    if la < h_max and lb > la + 1:
                        labels[e.b] = la + 1
                        changed = True
                elif lb < la:
                    if lb < h_max and la > lb + 1:
                        labels[e.a] = lb + 1
                        changed = True
    return labels


def temporal_neighborhood(trace: ContactTrace, source: int, t0: float, t_window: float, h_max: int) -> list:
    """Cumulative counts [N_1, ..., N_{h_max}] of nodes reached within h hops."""
    if t_window < 0:
        raise ValueError("t_window must be non-negative")
    labels = hop_labels(trace, source, t0, t_window, h_max)
    counts = [0] * h_max
    for v, lab in enumerate(labels):
        if v != source and lab <= h_max:
            for h in range(int(lab), h_max + 1):
                counts[h - 1] += 1
    return counts


@dataclass(frozen=True)
class NeighborhoodProfile:
    counts: np.ndarray  # shape (h_max, samples)
    t_window: float
    h_max: int

    @property
    def means(self) -> np.ndarray:
        return self.counts.mean(axis=1)

    @property
    def stderr(self) -> np.ndarray:
        n = self.counts.shape[1]
        if n < 2:
            return np.full(self.h_max, np.nan)
        return self.counts.std(axis=1, ddof=1) / math.sqrt(n)


def neighborhood_profile(trace: ContactTrace, t_window: float, samples: int, h_max: int, seed: int = 0) -> NeighborhoodProfile:
    if samples < 1:
        raise ValueError("samples must be >= 1")
    draws = sample_windows(trace, t_window, samples, seed)
    counts = np.array([temporal_neighborhood(trace, s, t0, t_window, h_max) for s, t0 in draws]).T
    return NeighborhoodProfile(counts.reshape(h_max, samples), float(t_window), h_max)


def empirical_p_h(profile: NeighborhoodProfile, alpha: float) -> np.ndarray:
    return np.array([p_h_from_neighborhood(alpha, float(m)) for m in profile.means])
