"""Two-phase cooperative transmission: source broadcast, DF relaying, stacking.

Signals are produced for a whole packet at once. Observations have shape
``(P, M)`` (one row per symbol instant) and symbol frames are ``(P, K)``
arrays of constellation points. Noise is circular complex Gaussian with
total variance ``sigma2`` per complex sample; it is either drawn from
``rng`` or passed in pre-drawn with unit variance through ``noise``, which
lets paired experiments share the same noise realization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Collection, Optional, Sequence

import numpy as np

from .detect import BlockDetector
from .sysmodel import ChannelRealization, SignatureMatrix, effective_signatures

__all__ = [
    "ReceivedFrame",
    "complex_noise",
    "snr_to_sigma2",
    "synth_phase1",
    "relay_process",
    "synth_phase2",
    "stack_destination",
    "stacked_signatures",
]


@dataclass(frozen=True)
class ReceivedFrame:
    y_sd: np.ndarray  # (P, M)
    y_sr: np.ndarray  # (L, P, M), zeros for inactive relays
    y_rd: np.ndarray  # (P, M)
    sigma2: float

    @property
    def y_stacked(self) -> np.ndarray:
        return stack_destination(self.y_sd, self.y_rd)


def snr_to_sigma2(snr_db: float) -> float:
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    return 10.0 ** (-snr_db / 10.0)


def complex_noise(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance circular complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _noise(rng, noise, shape, sigma2):
    if noise is None:
        if sigma2 == 0:
            return 0.0
        if rng is None:
            raise ValueError("need rng or pre-drawn noise when sigma2 > 0")
        noise = complex_noise(rng, shape)
    return np.sqrt(sigma2) * noise


def synth_phase1(
    codes: Sequence[SignatureMatrix],
    channels: ChannelRealization,
    symbols: np.ndarray,
    sigma2: float,
    rng: Optional[np.random.Generator] = None,
    amplitude: float = 1.0,
    relays: Optional[Collection[int]] = None,
    noise_sd: Optional[np.ndarray] = None,
    noise_sr: Optional[np.ndarray] = None,
):
    """Signals received from the sources at the destination and every relay.

    Parameters
    ----------
    symbols : ndarray
        ``(K,)`` for one symbol instant or ``(P, K)`` for a packet.
    relays : collection of int, optional
        Relays that listen; the others get an all-zero observation. All
        relays listen by default.

    Returns
    -------
    y_sd : ndarray, shape ``(M,)`` or ``(P, M)``
    y_sr : ndarray, shape ``(L, M)`` or ``(L, P, M)``
    """
    b = np.asarray(symbols)
    E_sd = amplitude * effective_signatures(codes, channels.sd)
    E_sr = amplitude * effective_signatures(codes, channels.sr)
    L = channels.L
    relays = range(L) if relays is None else relays
    y_sd = b @ E_sd + _noise(rng, noise_sd, b.shape[:-1] + E_sd.shape[-1:], sigma2)
    y_sr = np.zeros((L,) + y_sd.shape, dtype=complex)
    for l in relays:
        n = None if noise_sr is None else noise_sr[l]
        y_sr[l] = b @ E_sr[l] + _noise(rng, n, y_sd.shape, sigma2)
    return y_sd, y_sr


def relay_process(
    y_sr: np.ndarray,
    codes: Sequence[SignatureMatrix],
    channels: ChannelRealization,
    detector: BlockDetector,
    sigma2: float,
    amplitude: float = 1.0,
    relays: Optional[Collection[int]] = None,
) -> np.ndarray:
    """Hard decisions (symbol indices) of each relay's detector.

    Returns an ``(L, P, K)`` integer array; rows of relays that are not in
    ``relays`` are ``-1``. Decisions are forwarded whether right or wrong.
    """
    E_sr = amplitude * effective_signatures(codes, channels.sr)
    L = channels.L
    relays = range(L) if relays is None else relays
    Y = np.asarray(y_sr)
    single = Y.ndim == 2
    if single:
        Y = Y[:, None, :]
    out = np.full(Y.shape[:2] + (channels.K,), -1, dtype=np.int64)
    for l in relays:
        out[l] = detector(Y[l], E_sr[l], sigma2)
    return out[:, 0] if single else out


def synth_phase2(
    codes: Sequence[SignatureMatrix],
    channels: ChannelRealization,
    relay_symbols: np.ndarray,
    active_relays: Collection[int],
    sigma2: float,
    rng: Optional[np.random.Generator] = None,
    amplitude: float = 1.0,
    noise: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Superposition of the active relays' retransmissions at the destination.

    ``relay_symbols`` holds constellation points of shape ``(L, K)`` or
    ``(L, P, K)``; only rows of active relays are read.
    """
    rs = np.asarray(relay_symbols)
    E_rd = amplitude * effective_signatures(codes, channels.rd)
    y = np.zeros(rs.shape[1:-1] + E_rd.shape[-1:], dtype=complex)
    for l in active_relays:
        y = y + rs[l] @ E_rd[l]
    return y + _noise(rng, noise, y.shape, sigma2)


def stack_destination(y_sd: np.ndarray, y_rd: np.ndarray) -> np.ndarray:
    """Direct-phase samples followed by relay-phase samples."""
    y_sd, y_rd = np.asarray(y_sd), np.asarray(y_rd)
    if y_sd.shape != y_rd.shape:
        raise ValueError(f"phase shapes differ: {y_sd.shape} vs {y_rd.shape}")
    return np.concatenate([y_sd, y_rd], axis=-1)


def stacked_signatures(
    codes: Sequence[SignatureMatrix],
    channels: ChannelRealization,
    active_relays: Collection[int],
    amplitude: float = 1.0,
) -> np.ndarray:
    """``(K, 2M)`` destination signatures assuming error-free relays.

    Rows hold the direct-link signature on top and the sum of the active
    relays' signatures below, i.e. the composite model with every relay
    forwarding the source symbol.
    """
    E_sd = effective_signatures(codes, channels.sd)
    lower = np.zeros_like(E_sd)
    if len(active_relays):
        E_rd = effective_signatures(codes, channels.rd)
        lower = E_rd[list(active_relays)].sum(axis=0)
    return amplitude * np.concatenate([E_sd, lower], axis=-1)
