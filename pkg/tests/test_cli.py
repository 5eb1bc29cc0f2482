import subprocess
import sys

import pytest
from hypothesis import given, settings, strategies as st

from coopcdma.cli import UsageError, build_specs, format_args, main, parse_args, parse_values
from coopcdma.harness import read_csv

FAST = ["--trials", "2", "--packet", "20"]


def test_fig4a_style_run():
    inv = parse_args("run --users 10 --relays 6 --snr 0:2:20 --detector glsic --selector proposed".split())
    (spec,) = build_specs(inv)
    assert (spec.config.K, spec.config.L, spec.config.N, spec.config.Lp) == (10, 6, 16, 3)
    assert spec.values == tuple(float(v) for v in range(0, 21, 2))
    assert spec.cooperative and spec.selector.value == "proposed"
    assert spec.config.d_th == 0.25 and spec.config.n_group == 2
    assert spec.config.P == 1000 and spec.config.trials == 300


def test_preset_fig3_parameters():
    specs = build_specs(parse_args(["preset", "fig3"]))
    assert all(s.config.K == 20 and s.config.N == 32 and not s.cooperative for s in specs)


@pytest.mark.parametrize(
    "argv",
    [
        "run --dth -1", "run --snr 0:2", "run --snr 0:0:4", "run --snr a,b", "run --detector zf",
        "run --users 0", "run --group 0", "run --bogus 3", "preset fig9", "preset fig3 --users 4",
        "run --users 2,4 --snr 0,4", "run --paths 16", "run --users 3 --group 4", "frobnicate",
    ],
)
def test_usage_errors(argv):
    with pytest.raises(UsageError):
        build_specs(parse_args(argv.split()))
    assert main(argv.split()) == 2


def test_ranges():
    assert parse_values("0:4:16") == (0.0, 4.0, 8.0, 12.0, 16.0)
    assert parse_values("1.5,2") == (1.5, 2.0)
    assert parse_values("16:-4:8") == (16.0, 12.0, 8.0)
    assert parse_values("4:2:20", int) == (4, 6, 8, 10, 12, 14, 16, 18, 20)


flag_values = st.fixed_dictionaries(
    {},
    optional={
        "users": st.lists(st.integers(1, 30), min_size=1, max_size=4).map(tuple),
        "relays": st.integers(0, 10),
        "spreading": st.integers(2, 64),
        "paths": st.integers(1, 5),
        "modulation": st.sampled_from(["bpsk", "qpsk"]),
        "dth": st.floats(0, 5, allow_nan=False),
        "group": st.integers(1, 4),
        "packet": st.integers(1, 5000),
        "snr": st.lists(st.floats(-10, 40, allow_nan=False), min_size=1, max_size=5).map(tuple),
        "trials": st.integers(0, 1000),
        "seed": st.integers(0, 2**64 - 1),
        "detector": st.sampled_from(["rake", "mmse", "sic", "glsic", "mbglsic", "ml"]),
        "selector": st.sampled_from(["none", "all", "standard", "proposed", "exhaustive"]),
        "grey": st.sampled_from(["disc", "band"]),
        "fixed_codes": st.just(True),
        "out": st.sampled_from(["a.csv", "out/b.csv"]),
    },
)


@settings(max_examples=60, deadline=None)
@given(flag_values)
def test_parse_format_round_trip(opts):
    argv = ["run"]
    for k, v in opts.items():
        flag = "--" + k.replace("_", "-")
        if v is True:
            argv.append(flag)
        elif isinstance(v, tuple):
            argv.append(flag + "=" + ",".join(repr(x) if isinstance(x, float) else str(x) for x in v))
        else:
            argv.append(flag + "=" + (repr(v) if isinstance(v, float) else str(v)))
    inv = parse_args(argv)
    again = parse_args(format_args(inv))
    assert again == inv
    assert format_args(again) == format_args(inv)


def test_run_writes_csv(tmp_path, capsys):
    out = tmp_path / "r.csv"
    rc = main(["run", "--users", "3", "--relays", "2", "--spreading", "8", "--snr", "0,6",
               "--selector", "standard", "--out", str(out)] + FAST)
    assert rc == 0
    rows = read_csv(out)
    assert [r.sweep_value for r in rows] == [0.0, 6.0]
    text = capsys.readouterr().out
    assert "sweep=0.0 detector=glsic" in text and "ber=" in text


def test_user_sweep_run(tmp_path):
    out = tmp_path / "u.csv"
    assert main(["run", "--users", "2,4", "--relays", "1", "--spreading", "8", "--snr", "10",
                 "--out", str(out)] + FAST) == 0
    assert [r.sweep_value for r in read_csv(out)] == [2, 4]


def test_preset_runs(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["preset", "fig4b", "--trials", "1", "--packet", "3", "--out", str(out)]) == 0
    assert len(read_csv(out)) == 4 * 9


def test_unwritable_out(tmp_path):
    assert main(["run", "--out", str(tmp_path / "nope" / "r.csv")] + FAST) == 1
    assert main(["run", "--out", str(tmp_path)] + FAST) == 1


def test_config_file(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("# scenario\nK = 5\nN = 8\nL = 2\nmodulation = qpsk\nregenerate_codes = false\n")
    (spec,) = build_specs(parse_args(["run", "--config", str(cfg), "--relays", "3"]))
    assert (spec.config.K, spec.config.N, spec.config.L) == (5, 8, 3)
    assert spec.config.modulation.value == "qpsk" and not spec.config.regenerate_codes
    cfg.write_text("K = five\n")
    with pytest.raises(UsageError):
        build_specs(parse_args(["run", "--config", str(cfg)]))
    cfg.write_text("colour = red\n")
    with pytest.raises(UsageError):
        build_specs(parse_args(["run", "--config", str(cfg)]))
    with pytest.raises(UsageError):
        build_specs(parse_args(["run", "--config", str(tmp_path / "absent")]))


def test_selftest_subprocess():
    r = subprocess.run([sys.executable, "-m", "coopcdma", "selftest"], capture_output=True, text=True)
    assert r.returncode == 0, r.stdout + r.stderr
    assert "FAIL" not in r.stdout
