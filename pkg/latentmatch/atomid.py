#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Ridge-valley atom identification.

Each atom is reshaped to a w×w patch, its strongest spectral component inside
the ridge-period band is isolated and turned back into a pure sinusoid, and
the atom counts as ridge-valley when it correlates with that sinusoid and the
sinusoid's period is a plausible ridge period.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage, signal

from . import constants, log
from .batch import BatchRequest, batch_run
from .dictlearn import Dictionary
from .exceptions import ConfigError, InvalidArgument

TIE_RTOL = 1e-9


@dataclass(frozen=True)
class AtomIdConfig:
    th_xcorr: float = constants.TH_XCORR
    broad_period: Tuple[float, float] = constants.BROAD_PERIOD
    valid_period: Tuple[float, float] = constants.VALID_PERIOD

    def __post_init__(self):
        for name in ("broad_period", "valid_period"):
            rng = tuple(float(v) for v in getattr(self, name))
            if len(rng) != 2 or not 0 < rng[0] < rng[1]:
                raise ConfigError(f"{name} must be [min, max] with 0 < min < max, got {list(rng)}")
            object.__setattr__(self, name, rng)
        if not (self.broad_period[0] <= self.valid_period[0] and self.valid_period[1] <= self.broad_period[1]):
            raise ConfigError(f"valid_period {list(self.valid_period)} must lie inside broad_period {list(self.broad_period)}")
        if not 0 < self.th_xcorr < 1:
            raise ConfigError(f"th_xcorr must be in (0, 1), got {self.th_xcorr}")


@dataclass(frozen=True)
class SpectralPeak:
    """One DFT bin (u: column frequency, v: row frequency) of a w×w patch."""
    u: int
    v: int
    magnitude: float
    phase: float
    w: int

    @property
    def radius(self) -> float:
        return math.hypot(self.u, self.v)

    @property
    def period(self) -> float:
        return self.w / self.radius


@dataclass(frozen=True)
class AtomAnalysis:
    atom_index: int
    orientation: float
    period: float
    xcorr: float
    is_ridge_valley: bool
    peak: Optional[SpectralPeak] = None


def atom_to_patch(D: Dictionary, k: int) -> np.ndarray:
    if not 0 <= k < D.atom_count:
        raise InvalidArgument(f"atom index {k} out of range [0, {D.atom_count})")
    w = D.side
    return D.atoms[:, k].reshape(w, w)


def _square(patch: np.ndarray) -> np.ndarray:
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 2 or patch.shape[0] != patch.shape[1]:
        raise InvalidArgument(f"expected a square patch, got shape {patch.shape}")
    return patch


def dominant_frequency(patch: np.ndarray, broad_period: Sequence[float] = constants.BROAD_PERIOD) -> Optional[SpectralPeak]:
    """Strongest bin of the conjugate pair inside the ridge-period annulus, or None."""
    patch = _square(patch)
    w = patch.shape[0]
    spectrum = np.fft.fft2(patch)
    freqs = np.fft.fftfreq(w) * w
    V, U = np.meshgrid(freqs, freqs, indexing="ij")
    r = np.hypot(U, V)
    band = (r >= w / broad_period[1]) & (r <= w / broad_period[0])
    canonical = (V > 0) | ((V == 0) & (U > 0))
    cand = band & canonical
    if not cand.any():
        return None

    mag = np.abs(spectrum)
    best = mag[cand].max()
    if best < constants.PEAK_FLOOR:
        return None
    rows, cols = np.nonzero(cand & (mag >= best * (1 - TIE_RTOL)))
    # lowest radial frequency first, then lowest angle
    key = sorted(zip(r[rows, cols], np.arctan2(V[rows, cols], U[rows, cols]), rows, cols))
    _, _, i, j = key[0]
    return SpectralPeak(
        u=int(U[i, j]), v=int(V[i, j]), magnitude=float(mag[i, j]), phase=float(np.angle(spectrum[i, j])), w=w
    )


def atom_orientation(peak_u: float, peak_v: float, w: int = None) -> float:
    """Across-ridge direction of the wave vector, in [0, π)."""
    if peak_u == 0 and peak_v == 0:
        raise InvalidArgument("orientation of the zero-frequency bin is undefined")
    return math.atan2(peak_v, peak_u) % math.pi


def reconstruct_pattern(peak: SpectralPeak, w: int = None) -> np.ndarray:
    """Real sinusoid holding only ``peak`` and its conjugate bin."""
    w = w or peak.w
    spectrum = np.zeros((w, w), dtype=np.complex128)
    value = peak.magnitude * np.exp(1j * peak.phase)
    here = (peak.v % w, peak.u % w)
    mirror = ((-peak.v) % w, (-peak.u) % w)
    spectrum[here] = value
    if mirror != here:
        spectrum[mirror] = np.conj(value)
    return np.real(np.fft.ifft2(spectrum))


def xcorr_peak(p: np.ndarray, u: np.ndarray) -> float:
    """Max normalized cross-correlation over shifts within ±w/2, means taken over the overlap."""
    p, u = _square(p), _square(u)
    if p.shape != u.shape:
        raise InvalidArgument(f"patch shapes differ: {p.shape} vs {u.shape}")
    w = p.shape[0]
    ones = np.ones_like(p)

    def corr(a, b):
        return signal.correlate(a, b, mode="full")

    n = np.rint(corr(ones, ones))
    s_pu = corr(p, u)
    s_p, s_pp = corr(p, ones), corr(p * p, ones)
    s_u, s_uu = corr(ones, u), corr(ones, u * u)

    cov = s_pu - s_p * s_u / n
    var_p = s_pp - s_p * s_p / n
    var_u = s_uu - s_u * s_u / n
    flat = (var_p <= 1e-9 * np.abs(s_pp)) | (var_u <= 1e-9 * np.abs(s_uu)) | (var_p <= 0) | (var_u <= 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ncc = np.where(flat, 0.0, cov / np.sqrt(np.where(flat, 1.0, var_p * var_u)))

    h = w // 2
    window = ncc[w - 1 - h:w + h, w - 1 - h:w + h]
    return float(np.clip(window.max(), -1.0, 1.0))


def ridge_period(u: np.ndarray, o: float, radius: float = None) -> float:
    """Mean peak spacing of ``u`` sampled along direction ``o`` through the patch center.

    Each peak is moved to the vertex of the parabola through it and its two neighbours.
    Falls back to w/radius when fewer than two peaks are found.
    """
    u = _square(u)
    w = u.shape[0]
    c = (w - 1) / 2
    dx, dy = math.cos(o), math.sin(o)
    reach = min(c / abs(d) for d in (dx, dy) if abs(d) > 1e-12)
    t = np.arange(-math.floor(reach + 1e-9), math.floor(reach + 1e-9) + 1, dtype=np.float64)
    wave = ndimage.map_coordinates(u, [c + t * dy, c + t * dx], order=1, mode="nearest")

    inner = wave[1:-1]
    peaks = np.flatnonzero((inner > wave[:-2]) & (inner > wave[2:])) + 1
    if peaks.size >= 2:
        left, mid, right = wave[peaks - 1], wave[peaks], wave[peaks + 1]
        denom = left - 2 * mid + right
        shift = np.where(np.abs(denom) > 1e-15, 0.5 * (left - right) / np.where(denom == 0, 1, denom), 0.0)
        pos = t[peaks] + shift
        return float((pos[-1] - pos[0]) / (pos.size - 1))

    if radius is None:
        peak = dominant_frequency(u)
        radius = peak.radius if peak else 0.0
    return float(w / radius) if radius else 0.0


def analyze_atom(D: Dictionary, k: int, cfg: AtomIdConfig) -> AtomAnalysis:
    p = atom_to_patch(D, k)
    peak = dominant_frequency(p, cfg.broad_period)
    if peak is None:
        return AtomAnalysis(atom_index=k, orientation=0.0, period=0.0, xcorr=0.0, is_ridge_valley=False)
    o = atom_orientation(peak.u, peak.v, peak.w)
    u = reconstruct_pattern(peak)
    xcorr = xcorr_peak(p, u)
    period = ridge_period(u, o, radius=peak.radius)
    lo, hi = cfg.valid_period
    ok = xcorr >= cfg.th_xcorr and lo <= period <= hi
    return AtomAnalysis(atom_index=k, orientation=o, period=period, xcorr=xcorr, is_ridge_valley=ok, peak=peak)


def classify_atoms(D: Dictionary, cfg: AtomIdConfig = None, threads: int = 1) -> List[AtomAnalysis]:
    cfg = cfg or AtomIdConfig()
    D.side  # non-square atoms raise here, before any work is queued
    analyses = batch_run([BatchRequest(analyze_atom, (D, k, cfg)) for k in range(D.atom_count)], threads=threads)
    log.debug(f"classify_atoms: {sum(a.is_ridge_valley for a in analyses)}/{len(analyses)} ridge-valley atoms")
    return analyses


def label_dictionary(D: Dictionary, analyses: Sequence[AtomAnalysis]) -> Dictionary:
    if len(analyses) != D.atom_count:
        raise InvalidArgument(f"{len(analyses)} analyses for {D.atom_count} atoms")
    labels = [constants.LABEL_UNLABELED] * D.atom_count
    for a in analyses:
        labels[a.atom_index] = constants.LABEL_RIDGE if a.is_ridge_valley else constants.LABEL_NOT_RIDGE
    return D.with_labels(labels)


def format_atom_report(analyses: Sequence[AtomAnalysis]) -> str:
    lines = ["index\txcorr\tperiod\torientation\tlabel"]
    for a in analyses:
        label = "ridge-valley" if a.is_ridge_valley else "other"
        lines.append(f"{a.atom_index}\t{a.xcorr:.6f}\t{a.period:.4f}\t{a.orientation:.6f}\t{label}")
    return "\n".join(lines) + "\n"
