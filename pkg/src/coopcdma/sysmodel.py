"""Scenario configuration, spreading codes and multipath link channels.

Every other module builds on the objects defined here. Arrays stored on
the frozen containers are marked read-only so realizations can be shared
between trial workers without copying.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Collection, Optional, Sequence

import numpy as np

__all__ = [
    "Modulation",
    "Constellation",
    "get_constellation",
    "SystemConfig",
    "SignatureMatrix",
    "LinkChannel",
    "ChannelRealization",
    "generate_codes",
    "generate_channels",
    "effective_signature",
    "effective_signatures",
    "power_normalize",
    "default_power_profile",
]


class Modulation(str, enum.Enum):
    BPSK = "bpsk"
    QPSK = "qpsk"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Constellation:
    """Unit-energy symbol alphabet.

    ``points`` is the canonical ordering used for every tie-break, and
    ``bits[m]`` is the Gray label of ``points[m]``.
    """

    name: str
    points: np.ndarray
    bits: np.ndarray

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def bits_per_symbol(self) -> int:
        return self.bits.shape[1]

    @property
    def min_distance(self) -> float:
        p = self.points
        d = np.abs(p[:, None] - p[None, :])
        return float(d[~np.eye(len(p), dtype=bool)].min())


@functools.lru_cache(maxsize=None)
def get_constellation(modulation: Modulation | str) -> Constellation:
    modulation = Modulation(modulation)
    if modulation is Modulation.BPSK:
        points = np.array([1.0 + 0j, -1.0 + 0j])
        bits = np.array([[0], [1]], dtype=np.int8)
    else:
        points = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / math.sqrt(2)
        # bit 0 <-> sign of real part, bit 1 <-> sign of imaginary part
        bits = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.int8)
    return Constellation(modulation.value, _frozen(points), _frozen(bits))


def default_power_profile(n_paths: int) -> tuple[float, ...]:
    """Relative tap powers in dB, 3 dB decay per tap ([0, -3, -6] for three)."""
    return tuple(-3.0 * i for i in range(n_paths))


@dataclass(frozen=True)
class SystemConfig:
    """All scenario parameters of one simulation.

    Parameters
    ----------
    K : int
        Number of users.
    L : int
        Number of relays.
    N : int
        Spreading gain (chips per symbol).
    Lp : int
        Number of multipath taps per link, ``1 <= Lp < N``.
    modulation : Modulation
        Symbol alphabet.
    d_th : float
        Half-width of the unreliable band around each decision boundary.
    n_group : int
        Users examined per list-detection stage.
    P : int
        Packet length in symbols.
    snr_db : float
        Per-user SNR in dB.
    trials : int
        Number of Monte Carlo packets.
    master_seed : int
        Root seed of every random stream.
    power_profile_db : tuple of float, optional
        Relative tap powers in dB. Defaults to a 3 dB per tap decay.
    regenerate_codes : bool
        Draw fresh spreading codes for every packet. When false the codes
        come from ``master_seed`` alone and are shared by all packets.
    grey_region : {"disc", "band"}
        Shape of the unreliable zone used by list detection. ``"disc"``
        flags a soft output farther than ``d_th`` from its nearest point;
        ``"band"`` flags one within ``d_th`` of a decision boundary.
    """

    K: int = 10
    L: int = 6
    N: int = 16
    Lp: int = 3
    modulation: Modulation = Modulation.BPSK
    d_th: float = 0.25
    n_group: int = 2
    P: int = 1000
    snr_db: float = 10.0
    trials: int = 300
    master_seed: int = 0
    power_profile_db: Optional[tuple[float, ...]] = None
    regenerate_codes: bool = True
    grey_region: str = "disc"

    def __post_init__(self):
        object.__setattr__(self, "modulation", Modulation(self.modulation))
        if self.power_profile_db is None:
            object.__setattr__(self, "power_profile_db", default_power_profile(self.Lp))
        else:
            object.__setattr__(
                self, "power_profile_db", tuple(float(p) for p in self.power_profile_db)
            )
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.L < 0:
            raise ValueError(f"L must be >= 0, got {self.L}")
        if self.N < 2:
            raise ValueError(f"N must be >= 2, got {self.N}")
        if not 1 <= self.Lp < self.N:
            raise ValueError(f"Lp must satisfy 1 <= Lp < N, got Lp={self.Lp}, N={self.N}")
        if not (self.d_th >= 0 and math.isfinite(self.d_th)):
            raise ValueError(f"d_th must be a finite nonnegative number, got {self.d_th}")
        if not 1 <= self.n_group <= self.K:
            raise ValueError(f"n_group must satisfy 1 <= n_group <= K, got {self.n_group}")
        if self.P < 1:
            raise ValueError(f"P must be >= 1, got {self.P}")
        if self.trials < 0:
            raise ValueError(f"trials must be >= 0, got {self.trials}")
        if not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in an unsigned 64-bit integer")
        if self.grey_region not in ("disc", "band"):
            raise ValueError(f"grey_region must be 'disc' or 'band', got {self.grey_region!r}")
        if len(self.power_profile_db) != self.Lp:
            raise ValueError(
                f"power_profile_db needs {self.Lp} entries, got {len(self.power_profile_db)}"
            )

    @property
    def M(self) -> int:
        """Chips per observation window, ``N + Lp - 1``."""
        return self.N + self.Lp - 1

    @property
    def constellation(self) -> Constellation:
        return get_constellation(self.modulation)


@dataclass(frozen=True)
class SignatureMatrix:
    """Spreading code and its ``M x Lp`` matrix of delayed copies.

    Column ``c`` holds the code shifted down by ``c`` chips and zero padded.
    """

    code: np.ndarray
    Lp: int
    matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        code = np.asarray(self.code, dtype=float)
        N = len(code)
        m = np.zeros((N + self.Lp - 1, self.Lp))
        for c in range(self.Lp):
            m[c : c + N, c] = code
        object.__setattr__(self, "code", _frozen(code))
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def M(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class LinkChannel:
    taps: np.ndarray
    amplitude: float = 1.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be nonnegative")
        object.__setattr__(self, "taps", _frozen(np.asarray(self.taps, dtype=complex)))


@dataclass(frozen=True)
class ChannelRealization:
    """Tap gains of every link in one packet.

    ``sd[k]`` is user k to destination, ``sr[l, k]`` user k to relay l and
    ``rd[l, k]`` relay l to destination for user k's retransmission.
    Amplitudes are not stored; they depend on the active relay set.
    """

    sd: np.ndarray  # (K, Lp)
    sr: np.ndarray  # (L, K, Lp)
    rd: np.ndarray  # (L, K, Lp)

    def __post_init__(self):
        K, Lp = self.sd.shape
        if self.sr.shape[1:] != (K, Lp) or self.rd.shape != self.sr.shape:
            raise ValueError("inconsistent channel dimensions")
        for name in ("sd", "sr", "rd"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def K(self) -> int:
        return self.sd.shape[0]

    @property
    def L(self) -> int:
        return self.sr.shape[0]

    def link(self, kind: str, k: int, l: Optional[int] = None, amplitude: float = 1.0) -> LinkChannel:
        if kind == "sd":
            return LinkChannel(self.sd[k], amplitude)
        return LinkChannel(getattr(self, kind)[l, k], amplitude)


def generate_codes(config: SystemConfig, rng: np.random.Generator) -> list[SignatureMatrix]:
    """Draw K random antipodal codes with chips ``+-1/sqrt(N)``."""
    chips = 1.0 - 2.0 * rng.integers(0, 2, size=(config.K, config.N))
    chips /= math.sqrt(config.N)
    return [SignatureMatrix(c, config.Lp) for c in chips]


def _draw_taps(rng: np.random.Generator, shape, profile_db: Sequence[float]) -> np.ndarray:
    scale = np.sqrt(10.0 ** (np.asarray(profile_db) / 10.0))
    mag = scale * (1.0 - rng.random(shape))  # uniform on (0, 1]
    phase = rng.uniform(0.0, 2 * math.pi, shape)
    taps = mag * np.exp(1j * phase)
    return taps / np.linalg.norm(taps, axis=-1, keepdims=True)


def generate_channels(config: SystemConfig, rng: np.random.Generator) -> ChannelRealization:
    """Draw one block-fading realization of every link, each with unit power."""
    K, L, Lp = config.K, config.L, config.Lp
    profile = config.power_profile_db
    sd = _draw_taps(rng, (K, Lp), profile)
    sr = _draw_taps(rng, (L, K, Lp), profile)
    rd = _draw_taps(rng, (L, K, Lp), profile)
    return ChannelRealization(sd, sr, rd)


def effective_signature(S: SignatureMatrix, ch: LinkChannel) -> np.ndarray:
    """Receive-side vector ``amplitude * S @ taps`` of one user on one link."""
    if S.matrix.shape[1] != len(ch.taps):
        raise ValueError(
            f"signature has {S.matrix.shape[1]} columns but channel has {len(ch.taps)} taps"
        )
    return ch.amplitude * (S.matrix @ ch.taps)


def effective_signatures(codes: Sequence[SignatureMatrix], taps: np.ndarray) -> np.ndarray:
    """Unit-amplitude effective signatures for a stack of links.

    ``taps`` has shape ``(..., K, Lp)``; the result has shape ``(..., K, M)``.
    """
    S = np.stack([c.matrix for c in codes])  # (K, M, Lp)
    if taps.shape[-2:] != (S.shape[0], S.shape[2]):
        raise ValueError(f"taps shape {taps.shape} does not match codes {S.shape}")
    return np.einsum("kml,...kl->...km", S, taps)


def power_normalize(active_relays: Collection[int]) -> float:
    """Common amplitude of the source and each active relay retransmission.

    The per-user transmit energy over the direct copy and one copy per
    active relay sums to one.
    """
    return 1.0 / math.sqrt(1 + len(active_relays))
