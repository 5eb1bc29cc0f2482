"""Multiuser detectors working on one received vector or a block of them.

The per-symbol functions in this module operate directly on the observation
``y`` (matched filtering, explicit cancellation from the residual, residual
norms for list selection). They are the readable reference implementation
and also back the pure-Python kernel path. Block detectors used by the
simulator go through :mod:`coopcdma.kernels`, which runs the same algorithms
in the matched-filter domain.

Symbols are handled as integer indices into the constellation's canonical
point list; ``-1`` marks a user not yet decided.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .sysmodel import Constellation

__all__ = [
    "DetectorContext",
    "CandidateList",
    "BranchSet",
    "Detector",
    "rake",
    "slice_index",
    "slice_symbol",
    "is_reliable",
    "residual_metric",
    "conventional_sic",
    "gl_sic",
    "mb_orderings",
    "mb_gl_sic",
    "rake_detector",
    "mmse_linear",
    "ml_oracle",
    "make_block_detector",
    "ML_GUARD_BITS",
]

ML_GUARD_BITS = 20
GREY_REGIONS = ("disc", "band")


class Detector(str, enum.Enum):
    RAKE = "rake"
    MMSE = "mmse"
    SIC = "sic"
    GLSIC = "glsic"
    MBGLSIC = "mbglsic"
    MLORACLE = "ml"


@dataclass(frozen=True)
class DetectorContext:
    """Everything a detector needs besides the observation.

    ``eff`` holds one effective signature per row, shape ``(K, D)`` with
    ``D`` equal to ``M`` for a single link or ``2M`` for the stacked
    cooperative observation.
    """

    eff: np.ndarray
    constellation: Constellation
    d_th: float = 0.25
    n_group: int = 2
    sigma2: float = 0.0
    grey: str = "disc"
    energy: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        eff = np.atleast_2d(np.asarray(self.eff, dtype=complex))
        if not 1 <= self.n_group <= eff.shape[0]:
            raise ValueError(f"n_group must be in [1, K], got {self.n_group}")
        if self.d_th < 0:
            raise ValueError("d_th must be nonnegative")
        if self.grey not in GREY_REGIONS:
            raise ValueError(f"grey must be one of {GREY_REGIONS}, got {self.grey!r}")
        object.__setattr__(self, "eff", eff)
        object.__setattr__(self, "energy", np.einsum("kd,kd->k", eff.conj(), eff).real)

    @property
    def K(self) -> int:
        return self.eff.shape[0]


@dataclass
class CandidateList:
    """A complete set of tentative decisions, one per user.

    ``ordering`` is the detection order actually followed, ``branch_id``
    the index of the winning list among ``n_candidates`` enumerated ones.
    """

    decisions: np.ndarray
    ordering: tuple
    branch_id: int = 0
    n_candidates: int = 1
    metric: float = float("nan")

    def symbols(self, constellation: Constellation) -> np.ndarray:
        return constellation.points[self.decisions]


@dataclass(frozen=True)
class BranchSet:
    orderings: tuple


def rake(y: np.ndarray, eff_k: np.ndarray) -> complex:
    """Matched-filter output scaled so an isolated noiseless user yields its symbol."""
    y = np.asarray(y)
    eff_k = np.asarray(eff_k)
    if y.shape != eff_k.shape:
        raise ValueError(f"observation shape {y.shape} != signature shape {eff_k.shape}")
    e = np.vdot(eff_k, eff_k).real
    if e == 0:
        raise ValueError("RAKE on a zero-energy signature")
    return complex(np.vdot(eff_k, y) / e)


def slice_index(u: complex, constellation: Constellation) -> int:
    return int(np.argmin(np.abs(u - constellation.points)))


def slice_symbol(u: complex, constellation: Constellation) -> complex:
    """Nearest constellation point; ties go to the first point in canonical order."""
    return complex(constellation.points[slice_index(u, constellation)])


def is_reliable(u: complex, constellation: Constellation, d_th: float, grey: str = "disc") -> bool:
    """Classify a soft estimate as reliable or not.

    ``grey="disc"``: reliable only when ``u`` lies closer than ``d_th`` to
    its nearest constellation point, so everything outside the discs is
    the unreliable region. ``grey="band"``: unreliable only within ``d_th``
    of a decision boundary; both supported alphabets have their boundaries
    on the axes (BPSK the imaginary axis, QPSK both axes).
    """
    u = complex(u)
    if grey == "disc":
        return abs(u - slice_symbol(u, constellation)) < d_th
    if grey != "band":
        raise ValueError(f"grey must be one of {GREY_REGIONS}, got {grey!r}")
    if abs(u.real) < d_th:
        return False
    if constellation.size == 4 and abs(u.imag) < d_th:
        return False
    return True


def residual_metric(y: np.ndarray, ctx: DetectorContext, decisions: np.ndarray) -> float:
    """Squared norm of ``y - H b`` for a complete decision vector."""
    r = y - ctx.constellation.points[decisions] @ ctx.eff
    return float(np.vdot(r, r).real)


def _rake_all(r: np.ndarray, ctx: DetectorContext, users: Sequence[int]) -> np.ndarray:
    users = list(users)
    return (ctx.eff[users].conj() @ r) / ctx.energy[users]


def _pick_group(r, ctx, remaining, g, forced, pos):
    if forced is not None:
        return list(forced[pos : pos + g])
    if pos == 0:
        # nothing cancelled yet: decreasing received power
        return sorted(remaining, key=lambda k: (-ctx.energy[k], k))[:g]
    u = np.abs(_rake_all(r, ctx, remaining))
    ranked = sorted(zip(remaining, u), key=lambda t: (-t[1], t[0]))
    return [k for k, _ in ranked[:g]]


def _cancel(r, ctx, users, decisions):
    users = list(users)
    return r - ctx.constellation.points[decisions[users]] @ ctx.eff[users]


def _sic_stages(r, ctx, decisions, order, forced, stage):
    """Finish detection by SIC with ``stage`` users per stage; mutates its arguments."""
    K = ctx.K
    while len(order) < K:
        remaining = [k for k in range(K) if decisions[k] < 0]
        g = min(stage, len(remaining))
        group = _pick_group(r, ctx, remaining, g, forced, len(order))
        u = _rake_all(r, ctx, group)
        for k, uk in zip(group, u):
            decisions[k] = slice_index(uk, ctx.constellation)
        r = _cancel(r, ctx, group, decisions)
        order.extend(group)
    return r


def _check_forced(forced, K):
    if forced is None:
        return None
    forced = [int(k) for k in forced]
    if sorted(forced) != list(range(K)):
        raise ValueError(f"forced ordering {forced} is not a permutation of 0..{K - 1}")
    return forced


def conventional_sic(y, ctx: DetectorContext, forced_ordering=None) -> CandidateList:
    """SIC with RAKE front-end and reordering after every cancellation stage.

    Each stage decides ``ctx.n_group`` users from the same residual and
    cancels them together; with ``n_group == 1`` this is textbook
    one-user-at-a-time SIC.
    """
    y = np.asarray(y, dtype=complex)
    forced = _check_forced(forced_ordering, ctx.K)
    decisions = np.full(ctx.K, -1, dtype=np.int64)
    order: list = []
    _sic_stages(y.copy(), ctx, decisions, order, forced, ctx.n_group)
    return CandidateList(decisions, tuple(order), 0, 1, residual_metric(y, ctx, decisions))


def gl_sic(y, ctx: DetectorContext, forced_ordering=None) -> CandidateList:
    """Greedy list-based SIC.

    Groups of ``n_group`` users are examined per stage. While every soft
    estimate in a group lies outside the unreliable region the group is
    sliced and cancelled together. At the first group holding an unreliable
    user, every constellation assignment of the unreliable users opens a
    branch that is finished by one-user-per-stage SIC, and the branch with
    the smallest residual norm wins.
    """
    y = np.asarray(y, dtype=complex)
    K = ctx.K
    forced = _check_forced(forced_ordering, K)
    pts = ctx.constellation
    r = y.copy()
    decisions = np.full(K, -1, dtype=np.int64)
    order: list = []
    while len(order) < K:
        remaining = [k for k in range(K) if decisions[k] < 0]
        g = min(ctx.n_group, len(remaining))
        group = _pick_group(r, ctx, remaining, g, forced, len(order))
        u = _rake_all(r, ctx, group)
        ok = [is_reliable(uk, pts, ctx.d_th, ctx.grey) for uk in u]
        if all(ok):
            for k, uk in zip(group, u):
                decisions[k] = slice_index(uk, pts)
            r = _cancel(r, ctx, group, decisions)
            order.extend(group)
            continue

        for k, uk, good in zip(group, u, ok):
            if good:
                decisions[k] = slice_index(uk, pts)
        unreliable = [k for k, good in zip(group, ok) if not good]
        n_cand = pts.size ** len(unreliable)
        best = None
        for j, combo in enumerate(itertools.product(range(pts.size), repeat=len(unreliable))):
            d = decisions.copy()
            d[unreliable] = combo
            o = order + group
            _sic_stages(_cancel(r, ctx, group, d), ctx, d, o, forced, 1)
            m = residual_metric(y, ctx, d)
            if best is None or m < best.metric:
                best = CandidateList(d, tuple(o), j, n_cand, m)
        return best
    return CandidateList(decisions, tuple(order), 0, 1, residual_metric(y, ctx, decisions))


def mb_orderings(base: Sequence[int]) -> BranchSet:
    """Base ordering, its right cyclic shifts by 1..K-1, then its reversal."""
    base = list(base)
    K = len(base)
    if sorted(base) != sorted(set(base)):
        raise ValueError("base ordering has repeated entries")
    shifted = [tuple(base[-s:] + base[:-s]) for s in range(1, K)]
    return BranchSet((tuple(base), *shifted, tuple(reversed(base))))


def mb_gl_sic(y, ctx: DetectorContext) -> CandidateList:
    """Multi-branch GL-SIC with per-user refinement across branches.

    The natural-order GL-SIC result and K reordered runs form K+1 lists.
    The list with the smallest residual norm is the base; then, user by
    user in index order, each alternative decision found in another branch
    is tried and kept only when it lowers the residual norm.
    """
    y = np.asarray(y, dtype=complex)
    first = gl_sic(y, ctx)
    orderings = mb_orderings(first.ordering).orderings
    branches = [first] + [gl_sic(y, ctx, o) for o in orderings[1:]]
    metrics = [b.metric for b in branches]
    base = int(np.argmin(metrics))
    current = branches[base].decisions.copy()
    m_cur = metrics[base]
    for k in range(ctx.K):
        best_d, best_m = current, m_cur
        for b, branch in enumerate(branches):
            if b == base or branch.decisions[k] == current[k]:
                continue
            cand = current.copy()
            cand[k] = branch.decisions[k]
            m = residual_metric(y, ctx, cand)
            if m < best_m:
                best_d, best_m = cand, m
        current, m_cur = best_d, best_m
    return CandidateList(current, branches[base].ordering, base, len(branches), m_cur)


def rake_detector(y, ctx: DetectorContext) -> CandidateList:
    """Independent single-user matched filters, no interference handling."""
    y = np.asarray(y, dtype=complex)
    if np.any(ctx.energy == 0):
        raise ValueError("RAKE on a zero-energy signature")
    u = _rake_all(y, ctx, range(ctx.K))
    d = np.array([slice_index(uk, ctx.constellation) for uk in u])
    return CandidateList(d, tuple(range(ctx.K)), 0, 1, residual_metric(y, ctx, d))


def _mmse_outputs(Z: np.ndarray, ctx: DetectorContext) -> np.ndarray:
    # w_k = (H H^H + s2 I)^-1 h_k, evaluated in the K x K form
    H = ctx.eff
    G = H.conj() @ H.T
    if ctx.sigma2 == 0 and np.linalg.matrix_rank(G) < ctx.K:
        raise ValueError("MMSE system is singular: zero noise and dependent signatures")
    A = G + ctx.sigma2 * np.eye(ctx.K)
    try:
        return np.linalg.solve(A, Z.T).T
    except np.linalg.LinAlgError as exc:
        raise ValueError("MMSE system is singular") from exc


def _slice_many(x: np.ndarray, constellation: Constellation) -> np.ndarray:
    d = np.abs(x[..., None] - constellation.points) ** 2
    return np.argmin(d, axis=-1)


def mmse_linear(y, ctx: DetectorContext) -> CandidateList:
    """Linear MMSE filter per user followed by the slicer."""
    y = np.asarray(y, dtype=complex)
    x = _mmse_outputs((ctx.eff.conj() @ y)[None, :], ctx)[0]
    d = _slice_many(x, ctx.constellation)
    return CandidateList(d, tuple(range(ctx.K)), 0, 1, residual_metric(y, ctx, d))


def _ml_candidates(ctx: DetectorContext) -> np.ndarray:
    K, nc = ctx.K, ctx.constellation.size
    if K * np.log2(nc) > ML_GUARD_BITS:
        raise ValueError(
            f"exhaustive ML over {nc}**{K} vectors exceeds the {ML_GUARD_BITS}-bit guard"
        )
    # lexicographic order, first user most significant
    return np.array(list(itertools.product(range(nc), repeat=K)), dtype=np.int64).reshape(-1, K)


def ml_oracle(y, ctx: DetectorContext) -> CandidateList:
    """Exhaustive minimum-distance search over every symbol vector."""
    y = np.asarray(y, dtype=complex)
    cands = _ml_candidates(ctx)
    R = y[None, :] - ctx.constellation.points[cands] @ ctx.eff
    m = np.einsum("cd,cd->c", R.conj(), R).real
    j = int(np.argmin(m))
    return CandidateList(cands[j].copy(), tuple(range(ctx.K)), j, len(cands), float(m[j]))


# Block detectors: Y has shape (P, D), output decisions have shape (P, K).

BlockDetector = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


def rake_block(Y, eff, constellation):
    eff = np.atleast_2d(eff)
    e = np.einsum("kd,kd->k", eff.conj(), eff).real
    if np.any(e == 0):
        raise ValueError("RAKE on a zero-energy signature")
    return _slice_many((Y @ eff.conj().T) / e, constellation)


def mmse_block(Y, eff, constellation, sigma2):
    ctx = DetectorContext(eff, constellation, 0.0, 1, sigma2)
    return _slice_many(_mmse_outputs(Y @ ctx.eff.conj().T, ctx), constellation)


def ml_block(Y, eff, constellation, chunk: int = 1 << 22):
    ctx = DetectorContext(eff, constellation, 0.0, 1, 0.0)
    cands = _ml_candidates(ctx)
    S = constellation.points[cands]  # (C, K)
    HB = S @ ctx.eff  # (C, D)
    energy = np.einsum("cd,cd->c", HB.conj(), HB).real
    out = np.empty((len(Y), ctx.K), dtype=np.int64)
    step = max(1, chunk // max(1, len(cands)))
    for s in range(0, len(Y), step):
        # |y - Hb|^2 without the |y|^2 term
        m = energy[None, :] - 2 * (Y[s : s + step].conj() @ HB.T).real
        out[s : s + step] = cands[np.argmin(m, axis=1)]
    return out


def make_block_detector(
    detector: Detector | str,
    constellation: Constellation,
    d_th: float = 0.25,
    n_group: int = 2,
    grey: str = "disc",
) -> BlockDetector:
    """Return ``f(Y, eff, sigma2) -> decisions`` for the named detector.

    The SIC baseline is the standard one-user-per-stage SIC; ``n_group``
    only affects the list detectors.
    """
    from . import kernels

    detector = Detector(detector)
    pts = constellation.points

    if detector is Detector.RAKE:
        return lambda Y, eff, s2: rake_block(Y, eff, constellation)
    if detector is Detector.MMSE:
        return lambda Y, eff, s2: mmse_block(Y, eff, constellation, s2)
    if detector is Detector.MLORACLE:
        return lambda Y, eff, s2: ml_block(Y, eff, constellation)

    def clamp(eff):
        return min(n_group, np.atleast_2d(eff).shape[0])

    if detector is Detector.SIC:
        return lambda Y, eff, s2: kernels.sic_block(Y, eff, pts, 1)
    if detector is Detector.GLSIC:
        return lambda Y, eff, s2: kernels.glsic_block(Y, eff, pts, d_th, clamp(eff), grey=grey)
    return lambda Y, eff, s2: kernels.mbglsic_block(Y, eff, pts, d_th, clamp(eff), grey=grey)
