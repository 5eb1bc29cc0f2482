"""Command-line front end: ``coopcdma run | preset NAME | selftest``.

Exit codes are 0 on success, 1 on a runtime failure and 2 on a usage
error. ``SIM_THREADS`` caps the number of worker processes (0 = all cores).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence

from .detect import Detector
from .harness import PRESETS, ExperimentSpec, Selector, preset, run_experiments, write_csv
from .sysmodel import SystemConfig

__all__ = ["CliInvocation", "UsageError", "parse_args", "format_args", "build_specs", "main"]

# flag -> SystemConfig field
_CONFIG_FLAGS = {
    "relays": "L",
    "spreading": "N",
    "paths": "Lp",
    "modulation": "modulation",
    "dth": "d_th",
    "group": "n_group",
    "packet": "P",
    "trials": "trials",
    "seed": "master_seed",
    "grey": "grey_region",
}
# flags a preset defines itself
_PRESET_FIXED = ("users", "relays", "spreading", "snr", "detector", "selector")
_FLAG_ORDER = (
    "config", "users", "relays", "spreading", "paths", "modulation", "dth", "group", "packet",
    "snr", "trials", "seed", "detector", "selector", "grey", "fixed_codes", "out",
)


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class CliInvocation:
    """Parsed command line; ``options`` holds only flags that were given."""

    subcommand: str
    preset: Optional[str] = None
    options: dict = field(default_factory=dict)

    @property
    def out(self) -> Optional[str]:
        return self.options.get("out")


def parse_values(text: str, kind=float) -> tuple:
    """Parse ``a,b,c`` or an inclusive ``start:step:stop`` range."""
    text = text.strip()
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError
            start, step, stop = (kind(p) for p in parts)
            if step == 0 or (stop - start) / step < 0:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9))
            vals = tuple(kind(start + i * step) for i in range(n + 1))
        else:
            vals = tuple(kind(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed list or range {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    if kind is float and not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError("values must be finite")
    return vals


def _int_values(text):
    return parse_values(text, int)


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be a finite nonnegative number, got {text}")
    return v


def _bounded_int(lo, hi=None):
    def conv(text):
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
        if v < lo or (hi is not None and v > hi):
            raise argparse.ArgumentTypeError(f"{v} out of range")
        return v

    return conv


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file of SystemConfig fields")
    common.add_argument("--users", type=_int_values, help="user count, or a list/range for a user sweep")
    common.add_argument("--relays", type=_bounded_int(0))
    common.add_argument("--spreading", type=_bounded_int(2))
    common.add_argument("--paths", type=_bounded_int(1))
    common.add_argument("--modulation", choices=["bpsk", "qpsk"])
    common.add_argument("--dth", type=_nonneg_float)
    common.add_argument("--group", type=_bounded_int(1))
    common.add_argument("--packet", type=_bounded_int(1))
    common.add_argument("--snr", type=parse_values, help="dB list a,b,c or range start:step:stop")
    common.add_argument("--trials", type=_bounded_int(0))
    common.add_argument("--seed", type=_bounded_int(0, 2**64 - 1))
    common.add_argument("--detector", choices=[d.value for d in Detector])
    common.add_argument("--selector", choices=[s.value for s in Selector])
    common.add_argument("--grey", choices=["disc", "band"])
    common.add_argument("--fixed-codes", dest="fixed_codes", action="store_true", default=None,
                        help="draw spreading codes once per experiment")
    common.add_argument("--out", help="CSV output path")

    p = argparse.ArgumentParser(prog="coopcdma", description="Cooperative DS-CDMA link simulator")
    sub = p.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("run", parents=[common], help="run a custom experiment")
    pp = sub.add_parser("preset", parents=[common], help="run a named figure preset")
    pp.add_argument("name", choices=sorted(PRESETS))
    sub.add_parser("selftest", help="run fast built-in checks")
    return p


def parse_args(argv: Sequence[str]) -> CliInvocation:
    """Parse ``argv``; raises :class:`UsageError` on any malformed input."""
    parser = _parser()
    parser.exit_on_error = False
    try:
        ns = parser.parse_args(list(argv))
    except SystemExit as exc:  # argparse reports and exits on some errors
        raise UsageError("invalid arguments") from exc
    except argparse.ArgumentError as exc:
        raise UsageError(str(exc)) from exc
    options = {k: getattr(ns, k) for k in _FLAG_ORDER if getattr(ns, k, None) is not None}
    name = getattr(ns, "name", None)
    if name is not None:
        fixed = [f for f in _PRESET_FIXED if f in options]
        if fixed:
            raise UsageError(f"preset {name} fixes {', '.join('--' + f for f in fixed)}")
    return CliInvocation(ns.subcommand, name, options)


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_args(inv: CliInvocation) -> list[str]:
    """Inverse of :func:`parse_args`."""
    argv = [inv.subcommand]
    if inv.preset is not None:
        argv.append(inv.preset)
    for k in _FLAG_ORDER:
        if k not in inv.options:
            continue
        flag = "--" + k.replace("_", "-")
        v = inv.options[k]
        if v is True:
            argv.append(flag)
        else:
            # attached form keeps values such as "-4,0" from reading as flags
            argv.append(f"{flag}={_fmt(v)}")
    return argv


_CONFIG_TYPES = {
    "K": int, "L": int, "N": int, "Lp": int, "modulation": str, "d_th": float, "n_group": int,
    "P": int, "snr_db": float, "trials": int, "master_seed": int,
    "power_profile_db": lambda s: tuple(float(x) for x in s.split(",")),
    "regenerate_codes": lambda s: {"true": True, "false": False, "1": True, "0": False}[s.lower()],
    "grey_region": str,
}


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file of SystemConfig fields; ``#`` starts a comment."""
    known = {f.name for f in fields(SystemConfig)}
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise UsageError(f"{path}:{n}: unknown field {key!r}")
            try:
                out[key] = _CONFIG_TYPES[key](val)
            except (ValueError, KeyError):
                raise UsageError(f"{path}:{n}: bad value for {key}: {val!r}") from None
    return out


def _base_config(opts: dict, users: Optional[int] = None) -> SystemConfig:
    try:
        kw = read_config_file(opts["config"]) if "config" in opts else {}
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for flag, name in _CONFIG_FLAGS.items():
        if flag in opts:
            kw[name] = opts[flag]
    if users is not None:
        kw["K"] = users
    if opts.get("fixed_codes"):
        kw["regenerate_codes"] = False
    if "n_group" not in kw and kw.get("K", SystemConfig.K) < SystemConfig.n_group:
        kw["n_group"] = 1
    if "Lp" in kw and "power_profile_db" not in kw:
        kw["power_profile_db"] = None
    try:
        return SystemConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def build_specs(inv: CliInvocation) -> list[ExperimentSpec]:
    """Experiment specs described by a ``run`` or ``preset`` invocation."""
    opts = inv.options
    try:
        if inv.subcommand == "preset":
            return preset(inv.preset, _base_config(opts))
        users = opts.get("users", (None,))
        snr = opts.get("snr")
        if len(users) > 1:
            if snr is not None and len(snr) > 1:
                raise UsageError("sweep either --users or --snr, not both")
            base = _base_config(opts, min(users))
            if snr is not None:
                base = replace(base, snr_db=snr[0])
            sweep, values = "users", users
        else:
            base = _base_config(opts, users[0])
            sweep, values = "snr", snr if snr is not None else (base.snr_db,)
        selector = Selector(opts.get("selector", "none"))
        return [
            ExperimentSpec(
                base, sweep, values, Detector(opts.get("detector", "glsic")), selector,
                cooperative=selector is not Selector.NONE,
            )
        ]
    except UsageError:
        raise
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _check_writable(path):
    parent = os.path.dirname(os.path.abspath(path))
    if os.path.isdir(path) or not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise OSError(f"cannot write CSV to {path}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        inv = parse_args(argv)
        if inv.subcommand == "selftest":
            from .selftest import run_selftest

            return 0 if run_selftest() else 1
        specs = build_specs(inv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    out = inv.out or "results.csv"
    try:
        _check_writable(out)
        rows = run_experiments(specs)
        write_csv(rows, out)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for r in rows:
        print(
            f"sweep={r.sweep_value} detector={r.detector} selector={r.selector} "
            f"ber={r.ber:.6g} bits={r.bits} set_size={r.mean_set_size:.3g}"
        )
    print(f"wrote {len(rows)} rows to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
