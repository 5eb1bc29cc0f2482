import numpy as np
import pytest

from coopcdma.sysmodel import SystemConfig, effective_signatures, generate_channels, generate_codes


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_eff(rng, K=4, N=8, Lp=3, modulation="bpsk"):
    """Effective signatures ``(K, M)`` of one random direct-link draw."""
    cfg = SystemConfig(K=K, L=0, N=N, Lp=Lp, modulation=modulation, n_group=min(2, K))
    E = effective_signatures(generate_codes(cfg, rng), generate_channels(cfg, rng).sd)
    return cfg, E


def noisy_block(rng, cfg, E, P, sigma2):
    pts = cfg.constellation.points
    idx = rng.integers(0, len(pts), size=(P, cfg.K))
    n = (rng.standard_normal((P, E.shape[1])) + 1j * rng.standard_normal((P, E.shape[1]))) / np.sqrt(2)
    return idx, pts[idx] @ E + np.sqrt(sigma2) * n


ACCEPTANCE_LINES = []


def record_criterion(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
