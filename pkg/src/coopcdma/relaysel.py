"""Relay subset selection under the max-min SINR criterion.

The figure of merit of a relay subset is the SINR of its worst user, with
each user's SINR evaluated for a RAKE receiver on the stacked
direct-plus-relayed signature. Amplitudes are renormalized for every
candidate subset so all subsets radiate the same total energy per user.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Collection, Sequence

import numpy as np

from .sysmodel import ChannelRealization, LinkChannel, SignatureMatrix, effective_signatures, power_normalize

__all__ = [
    "SinrReport",
    "RelaySubset",
    "rake_sinr",
    "subset_sinr",
    "path_power",
    "relay_path_powers",
    "SubsetEvaluator",
    "select_exhaustive",
    "select_standard_greedy",
    "select_proposed_greedy",
    "EXHAUSTIVE_GUARD",
]

EXHAUSTIVE_GUARD = 20


@dataclass(frozen=True)
class SinrReport:
    per_user: np.ndarray
    min_value: float
    evaluations: int = 1


@dataclass(frozen=True)
class RelaySubset:
    """Outcome of a selection run.

    ``accepted`` lists the SINR of every set the algorithm moved to, in
    order, starting with its initial set.
    """

    members: tuple
    sinr: float
    evaluations: int
    accepted: tuple = ()

    @property
    def sinr_db(self) -> float:
        return 10 * np.log10(self.sinr) if self.sinr > 0 else -np.inf


def rake_sinr(H: np.ndarray, sigma2: float) -> np.ndarray:
    """Per-user SINR of RAKE reception for signatures stored as rows of ``H``.

    For user q with signature h_q::

        SINR_q = sum_k |h_k^H h_q|^2 / (sum_{k != q} |h_k|^2 + sigma2 |h_q|^2)
    """
    H = np.atleast_2d(H)
    G = H.conj() @ H.T
    num = np.sum(np.abs(G) ** 2, axis=0)
    norms = np.real(np.diagonal(G))
    den = norms.sum() - norms + sigma2 * norms
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)


class SubsetEvaluator:
    """Max-min SINR of relay subsets for one channel realization.

    Effective signatures are computed once; ``evaluations`` counts calls.
    """

    def __init__(self, codes: Sequence[SignatureMatrix], channels: ChannelRealization, sigma2: float):
        self.E_sd = effective_signatures(codes, channels.sd)
        self.E_rd = effective_signatures(codes, channels.rd)
        self.L = channels.L
        self.sigma2 = sigma2
        self.evaluations = 0

    def report(self, subset: Collection[int]) -> SinrReport:
        members = sorted(subset)
        if any(not 0 <= l < self.L for l in members):
            raise ValueError(f"relay indices {members} outside 0..{self.L - 1}")
        a = power_normalize(members)
        lower = self.E_rd[members].sum(axis=0) if members else np.zeros_like(self.E_sd)
        H = a * np.concatenate([self.E_sd, lower], axis=-1)
        per_user = rake_sinr(H, self.sigma2)
        self.evaluations += 1
        return SinrReport(per_user, float(per_user.min()), self.evaluations)

    def __call__(self, subset: Collection[int]) -> float:
        return self.report(subset).min_value


def subset_sinr(
    subset: Collection[int],
    codes: Sequence[SignatureMatrix],
    channels: ChannelRealization,
    sigma2: float,
) -> SinrReport:
    """SINR of every user when the relays in ``subset`` forward (empty: direct only)."""
    return SubsetEvaluator(codes, channels, sigma2).report(subset)


def path_power(ch: LinkChannel) -> float:
    return float(np.vdot(ch.taps, ch.taps).real)


def relay_path_powers(codes: Sequence[SignatureMatrix], channels: ChannelRealization) -> np.ndarray:
    """Received energy of each relay-to-destination link, summed over users.

    Tap vectors are normalized per link, so the energy after spreading and
    multipath is what tells relays apart.
    """
    E_rd = effective_signatures(codes, channels.rd)
    return np.einsum("lkm,lkm->l", E_rd.conj(), E_rd).real


def _require_relays(L):
    if L < 1:
        raise ValueError("relay selection needs at least one relay")


def select_exhaustive(codes, channels: ChannelRealization, sigma2: float) -> RelaySubset:
    """Best of all ``2**L - 1`` nonempty subsets.

    Ties go to the smaller subset, then to the lexicographically first.
    """
    L = channels.L
    _require_relays(L)
    if L > EXHAUSTIVE_GUARD:
        raise ValueError(f"exhaustive search over {L} relays exceeds the guard of {EXHAUSTIVE_GUARD}")
    ev = SubsetEvaluator(codes, channels, sigma2)
    best, best_s = None, -np.inf
    for size in range(1, L + 1):
        for subset in itertools.combinations(range(L), size):
            s = ev(subset)
            if best is None or s > best_s:
                best, best_s = subset, s
    return RelaySubset(best, best_s, ev.evaluations, (best_s,))


def select_standard_greedy(codes, channels: ChannelRealization, sigma2: float) -> RelaySubset:
    """Drop the weakest relay-to-destination link while the SINR improves."""
    L = channels.L
    _require_relays(L)
    ev = SubsetEvaluator(codes, channels, sigma2)
    power = relay_path_powers(codes, channels)
    current = list(range(L))
    pre = ev(current)
    accepted = [pre]
    while len(current) > 1:
        weakest = min(current, key=lambda l: (power[l], l))
        cand = [l for l in current if l != weakest]
        cur = ev(cand)
        if not cur > pre:
            break
        current, pre = cand, cur
        accepted.append(pre)
    return RelaySubset(tuple(current), pre, ev.evaluations, tuple(accepted))


def select_proposed_greedy(
    codes, channels: ChannelRealization, sigma2: float, min_size: int = 1
) -> RelaySubset:
    """Leave-one-out greedy search.

    Each stage tries every subset obtained by dropping one relay from the
    incumbent and moves to the best of them if it beats the incumbent.
    Subsets smaller than ``min_size`` are never adopted. At most
    ``L(L+1)/2`` subsets are evaluated.
    """
    L = channels.L
    _require_relays(L)
    ev = SubsetEvaluator(codes, channels, sigma2)
    current = list(range(L))
    pre = ev(current)
    accepted = [pre]
    for _ in range(L - 1):
        best, best_s = None, -np.inf
        for r in current:
            cand = [l for l in current if l != r]
            s = ev(cand)
            if best is None or s > best_s:
                best, best_s = cand, s
        if best_s > pre and len(best) >= min_size:
            current, pre = best, best_s
            accepted.append(pre)
        else:
            break
    return RelaySubset(tuple(current), pre, ev.evaluations, tuple(accepted))
