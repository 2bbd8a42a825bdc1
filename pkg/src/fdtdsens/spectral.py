"""Direct DFTs at arbitrary frequencies, transfer functions and propagation.

Spectra are Riemann sums ``X(f) = sum_n x[n] exp(-2j pi f n dt) dt``. All
spectra of one analysis share the same frequency grid, so products and
ratios are taken pointwise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

BAND_THRESHOLD = 1e-3
TAIL_THRESHOLD = 1e-6


class SpectralLeakageWarning(UserWarning):
    pass


@dataclass
class Spectrum:
    freqs: np.ndarray
    values: np.ndarray
    valid: np.ndarray | None = None  # boolean mask; None means everywhere valid

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.valid is None:
            self.valid = np.ones(self.freqs.shape, dtype=bool)

    def masked(self) -> np.ndarray:
        """Values with out-of-band entries replaced by NaN."""
        out = self.values.copy()
        out[~self.valid] = np.nan
        return out

    def __mul__(self, other):
        if isinstance(other, Spectrum):
            _check_grid(self, other)
            return Spectrum(self.freqs, self.values * other.values, self.valid & other.valid)
        return Spectrum(self.freqs, self.values * other, self.valid)

    __rmul__ = __mul__

    def __add__(self, other: "Spectrum") -> "Spectrum":
        _check_grid(self, other)
        return Spectrum(self.freqs, self.values + other.values, self.valid & other.valid)


@dataclass
class TransferFunction:
    source: object  # where the excitation sits
    target: object  # where the response is read
    spectrum: Spectrum

    def __call__(self) -> np.ndarray:
        return self.spectrum.masked()


def _check_grid(a: Spectrum, b: Spectrum) -> None:
    if a.freqs.shape != b.freqs.shape or not np.array_equal(a.freqs, b.freqs):
        raise ValueError("spectra live on different frequency grids")


def frequency_grid(f_lo: float, f_hi: float, count: int = 401) -> np.ndarray:
    return np.linspace(f_lo, f_hi, count)


def _check_freqs(freqs, dt: float) -> np.ndarray:
    freqs = np.asarray(freqs, dtype=float)
    nyquist = 0.5 / dt
    if np.any(freqs <= 0) or np.any(freqs >= nyquist):
        raise ValueError(f"frequencies must lie in (0, {nyquist:g}) Hz")
    return freqs


def dft_matrix(nsteps: int, dt: float, freqs) -> np.ndarray:
    """(nsteps, nfreq) kernel such that ``records @ K`` transforms along time."""
    freqs = _check_freqs(freqs, dt)
    n = np.arange(nsteps)
    return np.exp(-2j * np.pi * np.outer(n * dt, freqs)) * dt


def dft_records(records: np.ndarray, dt: float, freqs) -> np.ndarray:
    """Transform along axis 0: (nsteps, ...) -> (nfreq, ...).

    Step n is split as n = a + b*B so only (B + nsteps/B) exponentials per
    frequency are evaluated; the sum itself is two matrix products.
    """
    freqs = _check_freqs(freqs, dt)
    records = np.asarray(records)
    nsteps = records.shape[0]
    if nsteps == 0:
        raise ValueError("empty time series")
    flat = records.reshape(nsteps, -1)
    block = max(1, int(np.ceil(np.sqrt(nsteps))))
    nblocks = -(-nsteps // block)
    padded = np.zeros((nblocks * block, flat.shape[1]), dtype=np.result_type(flat, float))
    padded[:nsteps] = flat
    w = -2j * np.pi * freqs * dt
    inner = np.exp(np.outer(np.arange(block), w))  # (B, nf)
    outer = np.exp(np.outer(np.arange(nblocks) * block, w))  # (nb, nf)
    part = np.matmul(padded.reshape(nblocks, block, -1).transpose(0, 2, 1), inner)  # (nb, k, nf)
    out = np.einsum("bkf,bf->fk", part, outer) * dt
    return out.reshape((len(freqs),) + records.shape[1:])


def dft(samples, dt: float, freqs) -> Spectrum:
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1 or samples.size == 0:
        raise ValueError("dft expects a nonempty 1-D series")
    return Spectrum(np.asarray(freqs, dtype=float), dft_records(samples, dt, freqs))


def settled_level(records, fraction: float = 0.05) -> np.ndarray:
    """Mean of the last ``fraction`` of each record (axis 0): the level it settles to."""
    records = np.asarray(records)
    tail = records[-max(1, int(records.shape[0] * fraction)):]
    return tail.mean(axis=0)


def step_tail(level, nsteps: int, dt: float, freqs) -> np.ndarray:
    """Transform of ``level`` held from step ``nsteps`` to infinity: (nfreq, ...).

    Static charge left by a soft source is an exact fixed point of the update,
    so such records end in a constant that a finite sum would cut off.
    """
    freqs = _check_freqs(freqs, dt)
    zinv = np.exp(-2j * np.pi * freqs * dt)
    geo = dt * zinv**nsteps / (1 - zinv)
    level = np.asarray(level)
    return geo.reshape((-1,) + (1,) * level.ndim) * level[None]


def tail_ratio(samples, fraction: float = 0.05) -> float:
    """Largest excursion of the last ``fraction`` of a record from its settled level,
    relative to the record's peak."""
    x = np.asarray(samples, dtype=float)
    if x.ndim > 1:
        x = x.reshape(x.shape[0], -1)
    peak = np.abs(x).max() if x.size else 0.0
    if peak == 0:
        return 0.0
    tail = x[-max(1, int(len(x) * fraction)):]
    return float(np.abs(tail - tail.mean(axis=0)).max() / peak)


def dft_settled(records, dt: float, freqs, fraction: float = 0.05) -> np.ndarray:
    """:func:`dft_records` of records continued by their settled level (see :func:`step_tail`)."""
    records = np.asarray(records)
    return dft_records(records, dt, freqs) + step_tail(settled_level(records, fraction), records.shape[0], dt, freqs)


def check_decay(samples, label: str, threshold: float = TAIL_THRESHOLD) -> str | None:
    """Warn (and return the message) when a record has not settled by its end."""
    r = tail_ratio(samples)
    if r > threshold:
        msg = f"{label}: record tail at {r:.2e} of peak (> {threshold:g}); spectra may leak"
        warnings.warn(msg, SpectralLeakageWarning, stacklevel=2)
        return msg
    return None


def valid_band(excitation: np.ndarray, threshold: float = BAND_THRESHOLD) -> np.ndarray:
    mag = np.abs(np.asarray(excitation))
    peak = mag.max() if mag.size else 0.0
    if peak == 0:
        return np.zeros(mag.shape, dtype=bool)
    return mag >= threshold * peak


def ratio(response: np.ndarray, excitation: np.ndarray, threshold: float = BAND_THRESHOLD):
    """Pointwise response/excitation over the excitation's valid band.

    Returns ``(values, valid)``; values outside the band are NaN.
    """
    valid = valid_band(excitation, threshold)
    if not valid.any():
        raise ValueError("excitation spectrum is empty over the frequency grid")
    shape = (-1,) + (1,) * (np.ndim(response) - 1)
    exc = np.where(valid, excitation, 1.0).reshape(shape)
    vals = np.asarray(response) / exc
    vals = np.where(valid.reshape(shape), vals, np.nan)
    return vals, valid


def transfer_function(response, excitation, dt: float, freqs, source=None, target=None,
                      threshold: float = BAND_THRESHOLD) -> TransferFunction:
    """Ratio of the response spectrum to the excitation spectrum (same run)."""
    r = dft(response, dt, freqs)
    x = dft(excitation, dt, freqs)
    vals, valid = ratio(r.values, x.values, threshold)
    return TransferFunction(source, target, Spectrum(freqs, np.where(valid, vals, 0), valid))


def self_transfer_function(total, incident, dt: float, freqs, cell=None,
                           threshold: float = BAND_THRESHOLD) -> TransferFunction:
    """Total-over-incident field at one cell."""
    return transfer_function(total, incident, dt, freqs, cell, cell, threshold)


def propagate(tfs, sources) -> Spectrum:
    """Sum over cells of transfer function times source spectrum.

    ``tfs`` and ``sources`` are mappings keyed by source location; every key
    with a nonzero source needs a transfer function.
    """
    total = None
    for key, src in sources.items():
        if key not in tfs:
            if np.any(src.values != 0):
                raise KeyError(f"no transfer function for source at {key!r}")
            continue
        term = tfs[key].spectrum * src
        total = term if total is None else total + term
    if total is None:
        any_src = next(iter(sources.values()), None)
        if any_src is None:
            raise ValueError("no sources to propagate")
        return Spectrum(any_src.freqs, np.zeros_like(any_src.values), any_src.valid.copy())
    return total
