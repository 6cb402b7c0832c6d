"""Command-line entry point: ``combqkd <verb> [options]``.

Verbs
  simulate  run a figure scenario (``--scenario``) or, without one, a single
            Z-basis link whose raw time tags are written for later analysis
  analyze   coincidence histogram, CAR and optional heralded g2 of a tag file
  sift      three-detector sifting of a tag file into two key files
  plan      assign mode pairs to the configured user links
  encrypt   one-time-pad a file with a key file
  decrypt   same operation with the receiving party's key

Errors are reported on stderr as a single JSON object and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .detect import TagStream
from .experiment import simulate_z
from .otp import KeyBuffer, read_key, write_key, xor_codec
from .scenarios import SCENARIOS, Table, run_figure
from .sift import KeyReport, SiftConfig, alice_channels, bob_z_measure, qber, sift
from .tagio import TagFormatError, read_tags, split_channels, write_tags
from .tagstats import car, coincidence_histogram, heralded_g2

ALICE_CH, BOB_SHORT_CH, BOB_LONG_CH = 0, 1, 2


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("UsageError", message)


def _fail(kind: str, message: str, **extra):
    doc = {"error": kind, "message": message}
    doc.update(extra)
    sys.stderr.write(json.dumps(doc) + "\n")
    sys.exit(2)


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (default: shipped)")
    common.add_argument("--seed", type=_u64, help="overrides the config seed")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--format", default="csv", help="table format: csv or json")

    p = _Parser(prog="combqkd", description="Entangled-comb time-bin QKD simulator")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="run a scenario or a single link")
    s.add_argument("--scenario", help=f"one of: {', '.join(SCENARIOS)}")
    s.add_argument("--duration-s", type=float, help="single-link simulated time")
    s.add_argument("--tag-format", default="bin", help="tag file encoding: bin or csv")
    s.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")

    a = sub.add_parser("analyze", parents=[common], help="histogram / CAR / g2 of tags")
    a.add_argument("tags")
    a.add_argument("--a", type=int, default=ALICE_CH, help="start channel")
    a.add_argument("--b", type=int, default=BOB_SHORT_CH, help="stop channel")
    a.add_argument("--c", type=int, help="second stop channel (enables heralded g2)")
    a.add_argument("--bin-ps", type=int, default=200)
    a.add_argument("--half-range-ps", type=int, default=20_000)
    a.add_argument("--window-ps", type=int, default=200)

    f = sub.add_parser("sift", parents=[common], help="sift a tag file into keys")
    f.add_argument("tags")
    f.add_argument("--alice", type=int, default=ALICE_CH)
    f.add_argument("--short", type=int, default=BOB_SHORT_CH)
    f.add_argument("--long", type=int, default=BOB_LONG_CH)
    f.add_argument("--key-format", default="packed", help="packed or lines")

    sub.add_parser("plan", parents=[common], help="mode-pair allocation table")

    for verb in ("encrypt", "decrypt"):
        e = sub.add_parser(verb, parents=[common], help=f"{verb} a file with a key file")
        e.add_argument("payload")
        e.add_argument("--key", required=True, help="key file (packed or one bit per line)")
        e.add_argument("--offset", type=int, default=0, help="first unused key bit")
    return p


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _check_format(fmt: str, allowed=("csv", "json"), what="format"):
    if fmt not in allowed:
        raise CliError(f"unknown {what} {fmt!r}; expected one of {list(allowed)}")


def _emit(table: Table, args) -> Path:
    path = table.write(args.out, args.format)
    print(path)
    return path


def cmd_simulate(args):
    cfg = _config(args)
    if args.scenario is not None:
        if args.scenario not in SCENARIOS:
            raise CliError(f"unknown scenario {args.scenario!r}; expected one of "
                           f"{list(SCENARIOS)}")
        if args.jobs < 1:
            raise CliError("--jobs must be at least 1")
        _emit(run_figure(args.scenario, cfg, args.jobs), args)
        return
    _check_format(args.tag_format, ("bin", "csv"), "tag format")
    setup = cfg.link_setup()
    duration = cfg.sweep.duration_s if args.duration_s is None else args.duration_s
    run = simulate_z(setup, duration, np.random.default_rng(cfg.seed))
    t = np.concatenate([run.alice.t, run.bob_short.t, run.bob_long.t])
    ch = np.repeat([ALICE_CH, BOB_SHORT_CH, BOB_LONG_CH],
                   [len(run.alice.t), len(run.bob_short.t), len(run.bob_long.t)])
    order = np.lexsort((ch, t))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tag_path = out / f"tags.{args.tag_format}"
    write_tags(tag_path, t[order], ch[order], args.tag_format)
    rep = run.report()
    table = Table("link", ["duration_s", "raw_key_bps", "qber", "n_bits", "car"],
                  [[duration, rep.raw_rate, rep.qber, rep.n_bits, rep.car]],
                  _meta(cfg, tags=tag_path.name, power_mw=cfg.source.power_mw,
                        mode=setup.mode_id))
    print(tag_path)
    _emit(table, args)


def _meta(cfg, **extra) -> dict:
    meta = {"config_sha256": cfg.sha256(), "seed": cfg.seed,
            "dark_rate_hz": cfg.detector.dark_rate_hz, "window_ps": cfg.link.match_window_ps}
    meta.update(extra)
    return meta


def _channels(path):
    t, ch = read_tags(path)
    return split_channels(t, ch)


def _channel(chans: dict, k: int) -> np.ndarray:
    return chans.get(k, np.empty(0, np.int64))


def cmd_analyze(args):
    cfg = _config(args)
    chans = _channels(args.tags)
    a, b = _channel(chans, args.a), _channel(chans, args.b)
    h = coincidence_histogram(a, b, args.bin_ps, args.half_range_ps)
    meta = _meta(cfg, tags=Path(args.tags).name, start=args.a, stop=args.b,
                 car=car(h, args.window_ps))
    if args.c is not None:
        g = heralded_g2(a, b, _channel(chans, args.c), args.window_ps)
        meta.update(g2=g.g2, n_abc=g.n_abc, g2_stop2=args.c)
    rows = [[int(d), int(n)] for d, n in zip(h.centers, h.counts)]
    _emit(Table("analyze", ["delay_ps", "counts"], rows, meta), args)


def cmd_sift(args):
    cfg = _config(args)
    _check_format(args.key_format, ("packed", "lines"), "key format")
    chans = _channels(args.tags)
    lk = cfg.link
    sc = SiftConfig(lk.tau_ps, lk.match_window_ps, lk.basis_split)
    alice = TagStream(_channel(chans, args.alice), "alice")
    bob0 = TagStream(_channel(chans, args.short), "bob0")
    bob1 = TagStream(_channel(chans, args.long), "bob1")
    a_key, b_key, tr = sift(alice_channels(alice, sc.tau_ps), bob_z_measure(bob0, bob1), sc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    packed = args.key_format == "packed"
    write_key(out / "alice.key", a_key.bits, packed)
    write_key(out / "bob.key", b_key.bits, packed)
    (out / "transcript.txt").write_text(tr.serialize())
    all_t = np.concatenate([v for v in chans.values()]) if chans else np.zeros(1, np.int64)
    span_s = (int(all_t.max()) - int(all_t.min())) * 1e-12 if len(all_t) > 1 else 0.0
    q = qber(a_key, b_key) if len(a_key) else math.nan
    rep = KeyReport(len(a_key) / span_s if span_s > 0 else math.nan, q, n_bits=len(a_key),
                    duration_s=span_s)
    cols = ["n_bits", "span_s", "raw_key_bps", "qber", "shannon_fraction"]
    rows = [[rep.n_bits, span_s, rep.raw_rate, rep.qber, rep.shannon_fraction]]
    _emit(Table("sift", cols, rows, _meta(cfg, tags=Path(args.tags).name,
                                          discarded_ambiguous=tr.discarded_ambiguous,
                                          discarded_multi=tr.discarded_multi,
                                          unmatched=tr.unmatched)), args)


def cmd_plan(args):
    _emit(run_figure("network-plan", _config(args)), args)


def _otp(args, suffix: str):
    if args.offset < 0:
        raise CliError("--offset must be non-negative")
    data = Path(args.payload).read_bytes()
    key = KeyBuffer(read_key(args.key))
    key.take(args.offset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dest = out / (Path(args.payload).name + suffix)
    dest.write_bytes(xor_codec(data, key))
    print(json.dumps({"output": str(dest), "key_bits_used": 8 * len(data),
                      "next_offset": key.offset, "key_bits_left": key.available}))


def cmd_encrypt(args):
    _otp(args, ".enc")


def cmd_decrypt(args):
    _otp(args, ".dec")


_COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "sift": cmd_sift,
             "plan": cmd_plan, "encrypt": cmd_encrypt, "decrypt": cmd_decrypt}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _check_format(args.format)
        _COMMANDS[args.verb](args)
    except TagFormatError as exc:
        _fail("TagFormatError", str(exc), offset=exc.offset)
    except (CliError, ValueError, KeyError, OSError, RuntimeError) as exc:
        _fail(type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
