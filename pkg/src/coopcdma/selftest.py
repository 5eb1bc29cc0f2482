"""Quick built-in checks run by ``coopcdma selftest`` (a few seconds)."""

from __future__ import annotations

import os
import tempfile

import numpy as np

from . import kernels
from .detect import Detector, make_block_detector
from .harness import ExperimentSpec, ResultRow, run_experiment, write_csv
from .relaysel import select_exhaustive, select_proposed_greedy, select_standard_greedy
from .sysmodel import SystemConfig, effective_signatures, generate_channels, generate_codes


def _noiseless_recovery(rng):
    cfg = SystemConfig(K=4, L=0, N=8, Lp=1)
    cons = cfg.constellation
    for det in (Detector.MMSE, Detector.SIC, Detector.GLSIC, Detector.MBGLSIC, Detector.MLORACLE):
        f = make_block_detector(det, cons, cfg.d_th, cfg.n_group)
        for _ in range(5):
            E = effective_signatures(generate_codes(cfg, rng), generate_channels(cfg, rng).sd)
            if np.linalg.matrix_rank(E) < cfg.K:
                continue
            idx = rng.integers(0, cons.size, size=(100, cfg.K))
            if not np.array_equal(f(cons.points[idx] @ E, E, 0.0), idx):
                return False
    return True


def _reliable_path(rng):
    cfg = SystemConfig(K=6, L=0, N=16)
    pts = cfg.constellation.points
    E = effective_signatures(generate_codes(cfg, rng), generate_channels(cfg, rng).sd)
    idx = rng.integers(0, 2, size=(200, cfg.K))
    Y = pts[idx] @ E + 0.3 * (rng.standard_normal((200, E.shape[1])) + 0)
    a = kernels.sic_block(Y, E, pts, 2, full=True)
    b = kernels.glsic_block(Y, E, pts, 0.0, 2, full=True, grey="band")
    return all(np.array_equal(x, y) for x, y in zip(a[:2], b[:2]))


def _selection_counts(rng):
    cfg = SystemConfig(K=10, L=6, N=16)
    for _ in range(5):
        codes, ch = generate_codes(cfg, rng), generate_channels(cfg, rng)
        e = select_exhaustive(codes, ch, 0.03)
        p = select_proposed_greedy(codes, ch, 0.03)
        s = select_standard_greedy(codes, ch, 0.03)
        if e.evaluations != 63 or p.evaluations > 21 or s.evaluations > 6:
            return False
        if e.sinr < max(p.sinr, s.sinr):
            return False
    return True


def _csv_format():
    row = ResultRow(0.0, "glsic", "none", 3, 1000, 0.003, 0.0, 1.0, 1, 0)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "r.csv")
        write_csv([row], path)
        with open(path, encoding="utf-8") as fh:
            return fh.read().splitlines()[1].split(",")[5] == "0.003000000000"


def _determinism():
    cfg = SystemConfig(K=4, L=2, N=8, P=20, trials=4, master_seed=5)
    spec = ExperimentSpec(cfg, "snr", (4.0, 8.0), Detector.GLSIC, "proposed", True)
    return run_experiment(spec, workers=1) == run_experiment(spec, workers=2)


def _backends(rng):
    if "cython" not in kernels.available_backends():
        return True
    cy, py = kernels.get_backend("cython"), kernels.get_backend("python")
    cfg = SystemConfig(K=5, L=0, N=8)
    pts = cfg.constellation.points
    E = effective_signatures(generate_codes(cfg, rng), generate_channels(cfg, rng).sd)
    Y = pts[rng.integers(0, 2, size=(50, 5))] @ E + 0.4 * rng.standard_normal((50, E.shape[1]))
    a = cy.mbglsic_block(Y, E, pts, 0.25, 2, full=True)
    b = py.mbglsic_block(Y, E, pts, 0.25, 2, full=True)
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def run_selftest(verbose: bool = True) -> bool:
    rng = np.random.default_rng(2024)
    checks = [
        ("noiseless recovery", lambda: _noiseless_recovery(rng)),
        ("reliable path equals SIC", lambda: _reliable_path(rng)),
        ("selection evaluation counts", lambda: _selection_counts(rng)),
        ("csv number format", _csv_format),
        ("worker-count determinism", _determinism),
        ("backend agreement", lambda: _backends(rng)),
    ]
    ok = True
    for name, fn in checks:
        try:
            passed = bool(fn())
        except Exception as exc:  # report and keep going
            passed = False
            name = f"{name} ({exc})"
        ok &= passed
        if verbose:
            print(f"{'PASS' if passed else 'FAIL'} {name}")
    if verbose:
        print(f"backend: {kernels.BACKEND}")
    return ok
