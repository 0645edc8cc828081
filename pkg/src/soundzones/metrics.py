"""
NMSE, acoustic contrast, steady-state summaries and the per-iteration
operation-count model for centralized and diffusion pressure matching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

NMSE_FLOOR_DB = -300.0


class UndefinedReferenceError(ValueError):
    pass


@dataclass(frozen=True)
class MetricSample:
    iteration: int
    nmse_db: float
    ac_db: float
    point_set: str = "control"
    clamped: bool = False


def nmse_db(d_bright, p_bright) -> float:
    """Bright-zone reproduction error relative to the target energy, clamped at -300 dB."""
    d, p = np.asarray(d_bright), np.asarray(p_bright)
    if d.shape != p.shape or d.size < 1:
        raise ValueError("d and p must be equal-length non-empty vectors")
    ref = np.vdot(d, d).real
    if ref == 0:
        raise UndefinedReferenceError("target field is zero in the bright zone")
    err = np.vdot(d - p, d - p).real
    if err == 0:
        return NMSE_FLOOR_DB
    return max(10 * math.log10(err / ref), NMSE_FLOOR_DB)


def acoustic_contrast_db(H_b, H_d, g) -> float:
    """
    Bright-to-dark energy ratio, normalized per mic.

    Returns ``math.inf`` when the filter puts no energy in the dark zone;
    callers check ``math.isinf`` rather than receiving a large finite number.
    """
    H_b, H_d, g = np.asarray(H_b), np.asarray(H_d), np.asarray(g)
    if not np.any(g):
        raise ValueError("acoustic contrast is undefined for g = 0")
    pb, pd = H_b @ g, H_d @ g
    bright = H_d.shape[0] * np.vdot(pb, pb).real
    dark = H_b.shape[0] * np.vdot(pd, pd).real
    if dark == 0:
        return math.inf
    if bright == 0:
        return -math.inf
    return 10 * math.log10(bright / dark)


def metric_traces(H, d, g, n_bright):
    """
    Vectorized NMSE and AC over a stack of iterations.

    Parameters
    ----------
    H : (T, M, L) complex
    d : (T, M) complex
    g : (T, L) complex
    n_bright : int

    Returns
    -------
    nmse, ac : (T,) float
        NMSE clamped at -300 dB. AC is +inf when the dark zone is silent and
        nan when the filter is zero.
    """
    n_dark = H.shape[1] - n_bright
    # a run that is blowing up may overflow here; inf/nan propagate as-is
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        p = np.einsum("tml,tl->tm", H, g)
        err = (np.abs(d[:, :n_bright] - p[:, :n_bright]) ** 2).sum(axis=1)
        ref = (np.abs(d[:, :n_bright]) ** 2).sum(axis=1)
        eb = n_dark * (np.abs(p[:, :n_bright]) ** 2).sum(axis=1)
        ed = n_bright * (np.abs(p[:, n_bright:]) ** 2).sum(axis=1)
        nmse = np.maximum(10 * np.log10(err / ref), NMSE_FLOOR_DB)
        ac = 10 * np.log10(eb / ed)
    nmse[ref == 0] = np.nan
    return nmse, ac


class SteadyState(NamedTuple):
    mean_db: float
    std_db: float


def steady_state(samples, window: int, metric: str = "nmse_db") -> SteadyState:
    """Mean and (population) standard deviation over the last ``window`` samples."""
    values = [getattr(s, metric) if isinstance(s, MetricSample) else s for s in samples]
    if window < 1 or window > len(values):
        raise ValueError(f"window {window} not in 1..{len(values)}")
    tail = np.asarray(values[-window:], dtype=float)
    return SteadyState(float(tail.mean()), float(tail.std()))


# ---------------------------------------------------------------------------
# operation counts

@dataclass(frozen=True)
class ComplexityProfile:
    additions: float
    multiplications: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.additions < 0 or self.multiplications < 0:
            raise ValueError("operation counts must be non-negative")

    @property
    def fft_additions(self):
        return self.additions - self.processing_additions

    @property
    def processing_additions(self):
        return self.params["processing_additions"]

    @property
    def processing_multiplications(self):
        return self.params["processing_multiplications"]


def _fft_terms(n_transforms, F):
    lg = math.log2(F)
    return n_transforms * F * lg, n_transforms * (F / 2) * lg


def complexity_cpm(M, L, F) -> ComplexityProfile:
    """Per-iteration cost on the central processor, F-point transforms of M + L channels."""
    if min(M, L, F) < 1:
        raise ValueError("M, L and F must be at least 1")
    fft_add, fft_mul = _fft_terms(M + L, F)
    proc_add, proc_mul = M * L, (M + 1) * L
    return ComplexityProfile(fft_add + proc_add, fft_mul + proc_mul,
                             {"M": M, "L": L, "F": F, "processing_additions": proc_add,
                              "processing_multiplications": proc_mul})


def complexity_dpmd(M_k, L_k, C_k_size, N_k_size, L, F) -> ComplexityProfile:
    """Per-iteration cost on node k of the diffusion network."""
    if min(M_k, C_k_size, N_k_size, L, F) < 1 or L_k < 0:
        raise ValueError("node parameters must be at least 1")
    fft_add, fft_mul = _fft_terms(M_k + L_k, F)
    proc_add = (C_k_size + N_k_size - 1) * L
    proc_mul = (C_k_size + N_k_size + 1) * L
    return ComplexityProfile(fft_add + proc_add, fft_mul + proc_mul,
                             {"M_k": M_k, "L_k": L_k, "C_k": C_k_size, "N_k": N_k_size,
                              "L": L, "F": F, "processing_additions": proc_add,
                              "processing_multiplications": proc_mul})
