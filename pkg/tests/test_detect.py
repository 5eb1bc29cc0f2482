import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coopcdma import detect
from coopcdma.detect import (
    DetectorContext,
    conventional_sic,
    gl_sic,
    is_reliable,
    make_block_detector,
    mb_gl_sic,
    mb_orderings,
    ml_oracle,
    mmse_linear,
    rake,
    rake_detector,
    residual_metric,
    slice_index,
    slice_symbol,
)
from coopcdma.sysmodel import get_constellation

from conftest import noisy_block, random_eff

BPSK = get_constellation("bpsk")
QPSK = get_constellation("qpsk")


def orthogonal_eff(K, N=8):
    # rows of a Sylvester Hadamard matrix, unit norm
    H = np.array([[1.0]])
    while H.shape[0] < N:
        H = np.block([[H, H], [H, -H]])
    return H[:K].astype(complex) / np.sqrt(N)


# RAKE and slicer

def test_rake_examples():
    e = np.array([0.6, 0.8j, 0])
    assert rake(e, e) == pytest.approx(1.0)
    v = np.array([0.8, -0.6j, 0])  # orthogonal to e
    assert abs(rake(v, e)) < 1e-15
    assert rake(0.5 * e + v, e) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        rake(e, np.zeros(3))


def test_slicer_examples():
    assert slice_symbol(0.3 - 0.1j, BPSK) == 1
    assert slice_symbol(-0.01, BPSK) == -1
    assert slice_symbol(0.9 + 0.8j, QPSK) == pytest.approx((1 + 1j) / np.sqrt(2))
    # exact ties go to the first canonical point
    assert slice_index(0.0, BPSK) == 0
    assert slice_index(0.0, QPSK) == 0
    assert slice_index(1j, BPSK) == 0


@given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_slicer_idempotent(u):
    for c in (BPSK, QPSK):
        s = slice_symbol(u, c)
        assert slice_symbol(s, c) == s


@given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_slicer_is_nearest(u):
    for c in (BPSK, QPSK):
        d = np.abs(u - c.points)
        assert d[slice_index(u, c)] == d.min()


def test_band_reliability_examples():
    assert not is_reliable(0.10, BPSK, 0.25, "band")
    assert is_reliable(0.90, BPSK, 0.25, "band")
    assert is_reliable(0.01, BPSK, 0.0, "band")
    assert not is_reliable(0.9 + 0.1j, QPSK, 0.25, "band")
    assert is_reliable(0.5 - 0.5j, QPSK, 0.25, "band")


def test_disc_reliability_examples():
    assert is_reliable(0.9, BPSK, 0.25)
    assert not is_reliable(0.7, BPSK, 0.25)
    assert not is_reliable(1.0 + 0.3j, BPSK, 0.25)
    assert not is_reliable(1.0, BPSK, 0.0)
    p = QPSK.points[2]
    assert is_reliable(p + 0.1, QPSK, 0.25)
    with pytest.raises(ValueError):
        is_reliable(1.0, BPSK, 0.25, "ring")


@given(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False), st.floats(0, 2))
def test_reliable_region_shrinks_with_threshold(u, d):
    # a larger disc makes more estimates reliable; a larger band makes fewer
    for c in (BPSK, QPSK):
        if is_reliable(u, c, d):
            assert is_reliable(u, c, d + 0.1)
        if is_reliable(u, c, d + 0.1, "band"):
            assert is_reliable(u, c, d, "band")


# SIC family

def test_context_validation():
    E = orthogonal_eff(3)
    with pytest.raises(ValueError):
        DetectorContext(E, BPSK, n_group=4)
    with pytest.raises(ValueError):
        DetectorContext(E, BPSK, d_th=-1)
    with pytest.raises(ValueError):
        DetectorContext(E, BPSK, grey="ring")


@pytest.mark.parametrize("fn", [conventional_sic, gl_sic, mb_gl_sic, ml_oracle, mmse_linear, rake_detector])
@pytest.mark.parametrize("cons", [BPSK, QPSK])
def test_orthogonal_noiseless_exact(fn, cons, rng):
    E = orthogonal_eff(4) * np.array([[1.0], [0.8], [1.2], [0.9]])
    ctx = DetectorContext(E, cons)
    for _ in range(20):
        b = rng.integers(0, cons.size, 4)
        c = fn(cons.points[b] @ E, ctx)
        assert np.array_equal(c.decisions, b)
        assert sorted(c.ordering) == [0, 1, 2, 3]


def test_sic_single_user_is_rake(rng):
    e = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    ctx = DetectorContext(e[None, :], QPSK, n_group=1)
    for _ in range(50):
        y = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        assert conventional_sic(y, ctx).decisions[0] == slice_index(rake(y, e), QPSK)


def test_sic_first_user_is_strongest():
    E = orthogonal_eff(3) * np.array([[0.5], [2.0], [1.0]])
    c = conventional_sic(np.ones(3) @ E, DetectorContext(E, BPSK, n_group=1))
    assert c.ordering[0] == 1


def test_sic_matches_ml_for_weak_correlation():
    # with normalized cross-correlations below 1/3 each stage has at most three
    # interferers of amplitude < 1/3, so noiseless SIC cannot flip a BPSK sign
    rng = np.random.default_rng(77)
    checked = matched = 0
    for _ in range(1000):
        cfg, E = random_eff(rng, K=4, N=8, Lp=1)
        E = E * np.array([[1.0], [0.9], [0.8], [0.7]])
        e = np.einsum("kd,kd->k", E.conj(), E).real
        rho = np.abs(E.conj() @ E.T) / e[:, None]
        np.fill_diagonal(rho, 0)
        if rho.max() >= 1 / 3:
            continue
        ctx = DetectorContext(E, BPSK, n_group=1)
        b = rng.integers(0, 2, 4)
        y = BPSK.points[b] @ E
        checked += 1
        matched += np.array_equal(conventional_sic(y, ctx).decisions, ml_oracle(y, ctx).decisions)
    print(f"weak-correlation instances: {checked}, SIC == ML on {matched}")
    assert checked > 0 and matched == checked


def test_forced_ordering_validated():
    E = orthogonal_eff(3)
    ctx = DetectorContext(E, BPSK)
    with pytest.raises(ValueError):
        gl_sic(np.zeros(8), ctx, forced_ordering=[0, 0, 1])
    c = conventional_sic(np.ones(3) @ E, ctx, forced_ordering=[2, 0, 1])
    assert c.ordering == (2, 0, 1)


def test_gl_sic_reliable_path_equals_sic(rng):
    for grey, d_th in (("band", 0.0), ("disc", np.inf)):
        for _ in range(30):
            cfg, E = random_eff(rng, K=5, N=8)
            ctx = DetectorContext(E, BPSK, d_th, 2, grey=grey)
            _, Y = noisy_block(rng, cfg, E, 5, 0.2)
            for y in Y:
                a, b = conventional_sic(y, ctx), gl_sic(y, ctx)
                assert np.array_equal(a.decisions, b.decisions)
                assert a.ordering == b.ordering and b.n_candidates == 1


@pytest.mark.parametrize("cons,expected", [(BPSK, 4), (QPSK, 16)])
def test_gl_sic_both_unreliable_branches(cons, expected, rng):
    _, E = random_eff(rng, K=4, N=8)
    # all-zero observation: every soft estimate sits on the decision boundary
    for grey in ("band", "disc"):
        c = gl_sic(np.zeros(E.shape[1], complex), DetectorContext(E, cons, 0.25, 2, grey=grey))
        assert c.n_candidates == expected


def test_branch_count_is_power_of_alphabet(rng):
    for _ in range(40):
        cfg, E = random_eff(rng, K=5, N=8)
        ctx = DetectorContext(E, BPSK, 0.4, 3, grey="band")
        _, Y = noisy_block(rng, cfg, E, 5, 0.5)
        for y in Y:
            n = gl_sic(y, ctx).n_candidates
            assert n in (1, 2, 4, 8)


def test_gl_sic_picks_min_metric_branch(rng):
    cfg, E = random_eff(rng, K=4, N=8)
    ctx = DetectorContext(E, BPSK, 0.25, 2)
    _, Y = noisy_block(rng, cfg, E, 30, 0.3)
    for y in Y:
        c = gl_sic(y, ctx)
        assert c.metric == pytest.approx(residual_metric(y, ctx, c.decisions))
        assert ml_oracle(y, ctx).metric <= c.metric + 1e-9


def test_cancellation_leaves_zero_residual(rng):
    cfg, E = random_eff(rng, K=4, N=8, Lp=1)
    ctx = DetectorContext(E, QPSK)
    b = rng.integers(0, 4, 4)
    y = QPSK.points[b] @ E
    r = detect._cancel(y, ctx, range(4), b)
    assert np.linalg.norm(r) < 1e-12


def test_mb_orderings_examples():
    assert mb_orderings([0, 1, 2]).orderings == ((0, 1, 2), (2, 0, 1), (1, 2, 0), (2, 1, 0))
    assert mb_orderings([0]).orderings == ((0,), (0,))
    with pytest.raises(ValueError):
        mb_orderings([0, 0])


@given(st.permutations(list(range(7))))
def test_mb_orderings_are_shifts(base):
    o = mb_orderings(base).orderings
    K = len(base)
    assert len(o) == K + 1
    for s in range(1, K):
        assert list(o[s]) == [base[(i - s) % K] for i in range(K)]
    assert list(o[K]) == base[::-1]
    assert all(sorted(p) == sorted(base) for p in o)


def test_mb_metric_dominance(rng):
    for _ in range(10):
        cfg, E = random_eff(rng, K=4, N=8)
        ctx = DetectorContext(E, BPSK, 0.25, 2)
        _, Y = noisy_block(rng, cfg, E, 10, 0.3)
        for y in Y:
            first = gl_sic(y, ctx)
            branches = [first] + [gl_sic(y, ctx, o) for o in mb_orderings(first.ordering).orderings[1:]]
            mb = mb_gl_sic(y, ctx)
            base = min(b.metric for b in branches)
            assert mb.metric <= base + 1e-12
            assert base <= max(b.metric for b in branches)
            assert ml_oracle(y, ctx).metric <= mb.metric + 1e-9


def test_mb_all_branches_agree_unchanged():
    E = orthogonal_eff(4)
    ctx = DetectorContext(E, BPSK)
    y = BPSK.points[[0, 1, 1, 0]] @ E
    assert np.array_equal(mb_gl_sic(y, ctx).decisions, gl_sic(y, ctx).decisions)


# Linear and ML

def test_mmse_limits(rng):
    e = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    e /= np.linalg.norm(e)
    ctx = DetectorContext(e[None, :], QPSK, n_group=1, sigma2=1e-12)
    for _ in range(30):
        y = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        assert mmse_linear(y, ctx).decisions[0] == slice_index(rake(y, e), QPSK)
    E = orthogonal_eff(4)
    ctx = DetectorContext(E, QPSK, sigma2=0.3)
    for _ in range(30):
        y = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        assert np.array_equal(mmse_linear(y, ctx).decisions, rake_detector(y, ctx).decisions)


def test_mmse_singular_raises():
    E = np.array([[1, 0, 0], [1, 0, 0]], dtype=complex)
    with pytest.raises(ValueError):
        mmse_linear(np.zeros(3), DetectorContext(E, BPSK, sigma2=0.0))


def test_ml_guard():
    E = np.ones((11, 30), complex)
    with pytest.raises(ValueError):
        ml_oracle(np.zeros(30), DetectorContext(E, QPSK))


def test_ml_brute_force_ties_lexicographic():
    E = np.array([[1.0, 0.0], [1.0, 0.0]], dtype=complex)  # users indistinguishable
    c = ml_oracle(np.array([0.0, 0.0]), DetectorContext(E, BPSK, n_group=1))
    assert list(c.decisions) == [0, 1]


def test_ml_matches_enumeration(rng):
    cfg, E = random_eff(rng, K=3, N=8, modulation="qpsk")
    ctx = DetectorContext(E, QPSK)
    _, Y = noisy_block(rng, cfg, E, 10, 0.5)
    for y in Y:
        best = min(itertools.product(range(4), repeat=3), key=lambda b: residual_metric(y, ctx, np.array(b)))
        assert tuple(ml_oracle(y, ctx).decisions) == best


@pytest.mark.parametrize("det", ["rake", "mmse", "ml"])
def test_block_matches_per_symbol(det, rng):
    cfg, E = random_eff(rng, K=4, N=8, modulation="qpsk")
    _, Y = noisy_block(rng, cfg, E, 40, 0.3)
    ctx = DetectorContext(E, QPSK, sigma2=0.3)
    ref = {"rake": rake_detector, "mmse": mmse_linear, "ml": ml_oracle}[det]
    got = make_block_detector(det, QPSK)(Y, E, 0.3)
    want = np.array([ref(y, ctx).decisions for y in Y])
    assert np.array_equal(got, want)


@pytest.mark.parametrize("det", ["sic", "glsic", "mbglsic"])
def test_block_sic_family_matches_reference(det, rng):
    cfg, E = random_eff(rng, K=5, N=8)
    _, Y = noisy_block(rng, cfg, E, 40, 0.3)
    got = make_block_detector(det, BPSK, 0.25, 2)(Y, E, 0.3)
    if det == "sic":
        ctx = DetectorContext(E, BPSK, n_group=1)
        want = [conventional_sic(y, ctx).decisions for y in Y]
    else:
        ctx = DetectorContext(E, BPSK, 0.25, 2)
        fn = gl_sic if det == "glsic" else mb_gl_sic
        want = [fn(y, ctx).decisions for y in Y]
    assert np.array_equal(got, np.array(want))


def test_noiseless_list_and_linear_detectors_exact(rng):
    # plain SIC is left out: with strong correlation its RAKE stages can err even without noise
    for det in ["mmse", "glsic", "mbglsic", "ml"]:
        f = make_block_detector(det, QPSK)
        cfg, E = random_eff(rng, K=4, N=8, Lp=1, modulation="qpsk")
        idx, Y = noisy_block(rng, cfg, E, 200, 0.0)
        assert np.array_equal(f(Y, E, 0.0), idx), det


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_decisions_are_permutation_ordered(seed):
    rng = np.random.default_rng(seed)
    cfg, E = random_eff(rng, K=5, N=8)
    ctx = DetectorContext(E, BPSK, 0.25, 2)
    _, Y = noisy_block(rng, cfg, E, 2, 0.5)
    for y in Y:
        for fn in (conventional_sic, gl_sic, mb_gl_sic):
            c = fn(y, ctx)
            assert sorted(c.ordering) == list(range(5))
            assert np.all((c.decisions >= 0) & (c.decisions < 2))
