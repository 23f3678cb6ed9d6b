"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable or invalid
input files, corrupt models, infeasible corpora and the like).
"""
from __future__ import annotations

import argparse
import base64
import json
import logging
import os
import sys
from pathlib import Path

from . import pipeline as pl
from .audio_io import AudioError, read_wav, zero_mean
from .persistence import load_model, save_model
from .segmenter import (THETA_END, THETA_START, detect_candidates, energy_envelope, envelope_csv,
                        extract_segment)
from .rasta_plp import DEFAULT_CONFIG, feature_csv, features_for_segments
from .synth import DEFAULT_GAPS_S, CorpusConfig, NoiseProfile, gen_corpus, load_manifest

DEFAULT_SEED = 0
log = logging.getLogger("audiocaptcha")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _floats(text: str) -> tuple[float, ...]:
    try:
        out = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not out:
        raise argparse.ArgumentTypeError("list must not be empty")
    return out


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _common(p: argparse.ArgumentParser, seed=False, jobs=False, thresholds=False):
    if seed:
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    if jobs:
        p.add_argument("--jobs", type=_positive_int, default=pl.default_jobs())
    if thresholds:
        p.add_argument("--theta-start", type=float, default=THETA_START)
        p.add_argument("--theta-end", type=float, default=THETA_END)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="audiocaptcha", description="Audio CAPTCHA digit solver.")
    parser.add_argument("--config", type=Path, help="key=value file with default flag values")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="write a synthetic corpus and its manifest")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n-train", type=_positive_int, default=800)
    p.add_argument("--n-test", type=_positive_int, default=100)
    p.add_argument("--min-digits", type=int, default=4)
    p.add_argument("--max-digits", type=int, default=6)
    p.add_argument("--gap-range", type=_floats, default=DEFAULT_GAPS_S)
    p.add_argument("--white-snr-db", type=float, default=NoiseProfile.white_snr_db)
    p.add_argument("--hum-freq", type=float, default=NoiseProfile.hum_freq_hz)
    p.add_argument("--hum-amp", type=float, default=NoiseProfile.hum_amp)
    p.add_argument("--babble-amp", type=float, default=NoiseProfile.babble_amp)
    _common(p, seed=True, jobs=True)

    p = sub.add_parser("grid", help="cross-validate the (C, var) grid; CSV to stdout")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--penalties", type=_floats, default=pl.PENALTIES)
    p.add_argument("--vars", type=_floats, default=pl.VAR_FRACTIONS)
    p.add_argument("--folds", type=int, default=4)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--out", type=Path, help="also write the CSV here")
    _common(p, seed=True, jobs=True)

    p = sub.add_parser("train", help="train a final model and save it")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--kind", choices=pl.KINDS, default="proposed_svm")
    p.add_argument("--penalty", type=float, default=50.0)
    p.add_argument("--var", type=float, default=0.9)
    p.add_argument("--gamma", type=float, default=None)
    _common(p, jobs=True)

    p = sub.add_parser("solve", help="print the digit string of each WAV, one per line")
    p.add_argument("files", nargs="+", type=Path)
    p.add_argument("--model", type=Path)
    p.add_argument("--server", help="base URL of a running service; solve remotely")
    _common(p, thresholds=True)

    p = sub.add_parser("eval", help="score a model on a manifest split")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", type=Path, help="also write the JSON report here")
    _common(p, jobs=True)

    p = sub.add_parser("inspect", help="dump the energy envelope or candidate features as CSV")
    p.add_argument("what", choices=("envelope", "features"))
    p.add_argument("file", type=Path)
    p.add_argument("--start-s", type=float, action="append",
                   help="segment start for features (repeatable); default: detected candidates")
    _common(p, thresholds=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--model", type=Path)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    parser.command_parsers = sub.choices
    return parser


def read_config(path: Path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; keys use flag spelling."""
    out = {}
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value.strip('"')
    return out


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    values = read_config(args.config)
    sub = parser.command_parsers[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        action = known.get(key)
        if action is None or not action.option_strings:
            raise UsageError(f"config key {key!r} is not a flag of {args.command}")
        try:
            defaults[key] = action.type(raw) if action.type else raw
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"config key {key!r}: {exc}")
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# --------------------------------------------------------------------------
# commands


def cmd_gen(args, out) -> int:
    if len(args.gap_range) != 2:
        raise UsageError("--gap-range takes two numbers: min,max")
    noise = NoiseProfile(args.white_snr_db, args.hum_freq, args.hum_amp, args.babble_amp)
    cfg = CorpusConfig(args.n_train, args.n_test, args.seed, args.min_digits, args.max_digits,
                       tuple(args.gap_range), noise)
    manifest = gen_corpus(cfg, args.out, args.jobs)
    out.write(json.dumps({"entries": len(manifest["entries"]), "counts": manifest["counts"]}) + "\n")
    return 0


def cmd_grid(args, out) -> int:
    manifest = load_manifest(args.manifest)
    table = pl.build_training_table(manifest, jobs=args.jobs)
    grid = pl.GridConfig(args.penalties, args.vars, args.folds, args.gamma)
    report = pl.cross_validate(table, grid, args.seed, args.jobs)
    csv = report.to_csv()
    if args.out:
        args.out.write_text(csv)
    out.write(csv)
    log.info("best C=%g var=%g accuracy=%.4f", report.best_penalty, report.best_var_fraction,
             report.best_accuracy)
    return 0


def cmd_train(args, out) -> int:
    manifest = load_manifest(args.manifest)
    table = pl.build_training_table(manifest, jobs=args.jobs)
    var = args.var if args.kind == "proposed_svm" else None
    model = pl.train_final(table, args.kind, args.penalty, var, args.gamma)
    save_model(model, args.out)
    summary = {
        "kind": model.kind,
        "penalty": model.penalty,
        "var_fraction": model.var_fraction,
        "input_dim": model.input_dim,
        "rows": len(table),
        "resubstitution_accuracy": pl.per_class_accuracy(model, table),
    }
    out.write(json.dumps(summary) + "\n")
    return 0


def _solve_remote(args, out) -> int:
    import httpx

    url = args.server.rstrip("/") + "/solve"
    with httpx.Client(timeout=60.0) as client:
        for path in args.files:
            try:
                payload = base64.b64encode(path.read_bytes()).decode()
            except OSError as exc:
                raise AudioError(f"cannot read {path}: {exc}") from exc
            body = {"wav_base64": payload, "theta_start": args.theta_start, "theta_end": args.theta_end}
            try:
                resp = client.post(url, json=body)
            except httpx.HTTPError as exc:
                raise ConnectionError(f"service at {args.server} unreachable: {exc}") from exc
            if resp.status_code == 422:
                raise AudioError(f"{path}: {resp.json().get('detail')}")
            resp.raise_for_status()
            out.write(resp.json()["digits"] + "\n")
    return 0


def cmd_solve(args, out) -> int:
    if args.server:
        return _solve_remote(args, out)
    if args.model is None:
        raise UsageError("solve needs --model or --server")
    model = load_model(args.model)
    for path in args.files:
        clip = read_wav(path)
        digits = pl.solve(model, clip, model.feature_cfg, args.theta_start, args.theta_end)
        out.write("".join(str(d) for d in digits) + "\n")
    return 0


def cmd_eval(args, out) -> int:
    model = load_model(args.model)
    manifest = load_manifest(args.manifest)
    report = pl.evaluate(model, manifest, args.split, args.jobs)
    text = report.to_json()
    if args.out:
        args.out.write_text(text + "\n")
    out.write(text + "\n")
    out.write(report.summary())
    return 0


def cmd_inspect(args, out) -> int:
    clip = zero_mean(read_wav(args.file))
    env = energy_envelope(clip)
    if args.what == "envelope":
        out.write(envelope_csv(env))
        return 0
    cfg = DEFAULT_CONFIG
    if args.start_s:
        starts = [int(round(s * clip.sample_rate)) for s in args.start_s]
    else:
        starts = [c.start_index for c in detect_candidates(env, args.theta_start, args.theta_end)]
    seg_s = cfg.segment_len / clip.sample_rate
    feats = features_for_segments([extract_segment(clip, s, seg_s) for s in starts], cfg)
    out.write(feature_csv(feats.reshape(-1, cfg.n_features), cfg))
    return 0


def cmd_serve(args, out) -> int:
    import uvicorn

    from .service import create_app

    model = load_model(args.model) if args.model else None
    uvicorn.run(create_app(model), host=args.host, port=args.port)
    return 0


COMMANDS = {"gen": cmd_gen, "grid": cmd_grid, "train": cmd_train, "solve": cmd_solve,
            "eval": cmd_eval, "inspect": cmd_inspect, "serve": cmd_serve}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except BrokenPipeError:
        # reader went away (e.g. piped into head); not an input problem
        sys.stdout = open(os.devnull, "w")
        return 0
    except (AudioError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
