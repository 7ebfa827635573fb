"""Command-line entry point.

Subcommands: ``convert``, ``filter-design``, ``cv``, ``smallset``,
``synth-bench``. Settings come from an optional ``key = value`` config
file, overridden by flags (``--set key=value`` reaches any key). The
output directory can also be set with ``SPA_EEG_OUTPUT_DIR``. Every run
writes ``manifest.ini`` to the output directory; passing it back with
``--config`` reproduces the run.

Exit codes: 0 success, 2 usage or validation error, 3 pipeline failure.
"""

import argparse
import configparser
import os
import re
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from .errors import SpaEegError
from .evaluation import (
    NOT_IMPLEMENTED,
    PipelineFailure,
    kfold_cv,
    learning_curve_csv,
    method_spec,
    render_tables,
    runs_csv,
    subsample_experiment,
    text_table,
)
from .ingest import (
    concatenate,
    drop_channels,
    epochs_from_events,
    read_epochs,
    read_epochs_csv,
    read_gdf,
    relabel_events,
    write_epochs,
)
from .preprocess import BandpassSpec, design_butterworth_bandpass, magnitude_response, preprocess_set
from .seeding import derive_seed
from .spa import HyperparamGrid, save_spa, spa_fit, spa_predict
from .splits import stratified_subsample
from .synth import concentric_circles, min_separation, sample_two_manifolds

ENV_OUTPUT = "SPA_EEG_OUTPUT_DIR"

DEFAULTS = {
    "inputs": "",
    "output_dir": "spa_eeg_out",
    "seed": "0",
    "workers": "1",
    # ingest
    "cue_codes": "769:1, 770:2",
    "window": "0.5, 2.5",
    "margin": "1.0",
    "drop_channels": "auto",
    "subject_pattern": "(.*)",
    "labels_dir": "",
    "unknown_cue_code": "783",
    "fs": "250",
    # preprocess
    "band": "8, 30",
    "order": "5",
    "filter_mode": "zero-phase",
    "response_step": "0.5",
    # features / classifiers
    "methods": "csp+spa, csp+lda, mdrm, ts+lda",
    "m": "3",
    "p_values": "1, 2, 3, 4",
    "k_min": "8",
    "k_max": "46",
    "k_step": "1",
    "protocol": "inner_cv",
    # experiments
    "folds": "10",
    "pool_sessions": "true",
    "fractions": "1/2, 1/3, 1/6, 1/12",
    "replicates": "20",
    # synth-bench
    "bench_ambient_dim": "10",
    "bench_radii": "1, 3",
    "bench_ns": "100, 400",
    "bench_sigmas": "0, 0.25, 0.5, 1.0",
    "bench_seeds": "5",
    "bench_n_test": "200",
    "bench_k": "20",
    "bench_p": "1",
    "bench_save_datasets": "false",
}


class UsageError(SpaEegError):
    pass


def _split(value):
    return [v.strip() for v in re.split(r"[,\s]+", value.strip()) if v.strip()]


def _floats(value, n=None, key="value"):
    try:
        out = [float(Fraction(v)) for v in _split(value)]
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"{key}: expected numbers, got {value!r}") from None
    if n is not None and len(out) != n:
        raise UsageError(f"{key}: expected {n} numbers, got {value!r}")
    return out


def _int(cfg, key):
    try:
        return int(cfg[key])
    except ValueError:
        raise UsageError(f"{key}: expected an integer, got {cfg[key]!r}") from None


def _bool(cfg, key):
    v = cfg[key].strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"{key}: expected true/false, got {cfg[key]!r}")


def _cue_codes(value):
    codes = {}
    for item in _split(value):
        try:
            code, label = item.split(":")
            codes[int(code)] = int(label)
        except ValueError:
            raise UsageError(f"cue_codes: bad entry {item!r} (want code:label)") from None
    return codes


def load_config(path):
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    if not re.match(r"\s*\[", text):
        text = "[run]\n" + text
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise UsageError(f"bad config {path}: {exc}") from None
    section = parser["run"] if parser.has_section("run") else {}
    unknown = set(section) - set(DEFAULTS) - {"command", "version"}
    if unknown:
        raise UsageError(f"unknown config key(s): {sorted(unknown)}")
    return {k: v for k, v in section.items() if k in DEFAULTS}


def resolve(args):
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(load_config(args.config))
    if os.environ.get(ENV_OUTPUT):
        cfg["output_dir"] = os.environ[ENV_OUTPUT]
    for key, flag in (("output_dir", "out"), ("seed", "seed"), ("workers", "workers")):
        if getattr(args, flag, None) is not None:
            cfg[key] = str(getattr(args, flag))
    if getattr(args, "inputs", None):
        cfg["inputs"] = " ".join(args.inputs)
    for item in args.set or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip()
        if key not in DEFAULTS:
            raise UsageError(f"unknown config key {key!r}")
        cfg[key] = value.strip()
    seed = _int(cfg, "seed")
    if not 0 <= seed < 2**64:
        raise UsageError("seed must be a 64-bit unsigned value")
    return cfg


def write_manifest(cfg, command):
    parser = configparser.ConfigParser(interpolation=None)
    parser["run"] = {"command": command, "version": __version__, **cfg}
    os.makedirs(cfg["output_dir"], exist_ok=True)
    with open(os.path.join(cfg["output_dir"], "manifest.ini"), "w") as fh:
        parser.write(fh)


def _write(cfg, name, text):
    path = os.path.join(cfg["output_dir"], name)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _inputs(cfg):
    paths = _split(cfg["inputs"]) if cfg["inputs"] else []
    if not paths:
        raise UsageError("no input files given")
    for p in paths:
        if not os.path.isfile(p):
            raise UsageError(f"input file not found: {p}")
    return paths


def _bandpass(cfg, fs):
    low, high = _floats(cfg["band"], 2, "band")
    return BandpassSpec(fs=fs, low_hz=low, high_hz=high, order=_int(cfg, "order"))


def _grid(cfg):
    return HyperparamGrid(
        p_values=tuple(int(v) for v in _floats(cfg["p_values"], key="p_values")),
        k_min=_int(cfg, "k_min"), k_step=_int(cfg, "k_step"), k_max=_int(cfg, "k_max"),
    )


def _subject(cfg, path):
    stem = os.path.splitext(os.path.basename(path))[0]
    match = re.fullmatch(cfg["subject_pattern"], stem)
    return match.group(1) if match and match.groups() else stem


def _channels_to_drop(cfg, names):
    spec = cfg["drop_channels"].strip()
    if spec.lower() == "auto":
        return [n for n in names if n.upper().startswith("EOG")]
    if spec.lower() in ("", "none"):
        return []
    return _split(spec)


def _true_labels(cfg, path):
    if not cfg["labels_dir"]:
        return None
    stem = os.path.splitext(os.path.basename(path))[0]
    mat = os.path.join(cfg["labels_dir"], stem + ".mat")
    if not os.path.isfile(mat):
        return None
    import scipy.io

    return np.asarray(scipy.io.loadmat(mat)["classlabel"]).reshape(-1).astype(int)


def _convert_one(cfg, path):
    t0, t1 = _floats(cfg["window"], 2, "window")
    filtering = cfg["filter_mode"] != "off"
    margin = float(cfg["margin"]) if filtering else 0.0
    if path.lower().endswith(".csv"):
        epochs = read_epochs_csv(path, float(cfg["fs"]), subject_id=_subject(cfg, path))
        drop = _channels_to_drop(cfg, epochs.channel_names)
        epochs = drop_channels(epochs, drop)
        if filtering:
            epochs = preprocess_set(epochs, _bandpass(cfg, epochs.fs), mode=cfg["filter_mode"])
        return epochs
    rec = read_gdf(path)
    labels = _true_labels(cfg, path)
    if labels is not None:
        # Evaluation sessions carry one "cue unknown" code; true classes
        # come from a separate label file, in cue order (1 -> 769, ...).
        rec = relabel_events(rec, _int(cfg, "unknown_cue_code"), 768 + labels)
    epochs = epochs_from_events(
        rec, _cue_codes(cfg["cue_codes"]), (t0 - margin, t1 + margin), _subject(cfg, path)
    )
    epochs = drop_channels(epochs, _channels_to_drop(cfg, epochs.channel_names))
    if filtering:
        epochs = preprocess_set(
            epochs, _bandpass(cfg, epochs.fs), crop=(margin, margin + t1 - t0),
            mode=cfg["filter_mode"],
        )
    return epochs


def cmd_convert(cfg):
    outputs = []
    for path in _inputs(cfg):
        epochs = _convert_one(cfg, path)
        if epochs.n_trials == 0:
            raise UsageError(
                f"{path}: no cues matching {cfg['cue_codes']!r}; "
                "sessions with unknown cues need labels_dir"
            )
        os.makedirs(cfg["output_dir"], exist_ok=True)
        out = os.path.join(
            cfg["output_dir"], os.path.splitext(os.path.basename(path))[0] + ".epochs"
        )
        write_epochs(epochs, out)
        counts = epochs.class_counts()
        print(f"{path} -> {out}: {epochs.n_trials} trials "
              f"(class 1: {counts[1]}, class 2: {counts[2]}), "
              f"{epochs.n_channels} channels x {epochs.n_samples} samples")
        outputs.append(out)
    return outputs


def cmd_filter_design(cfg):
    fs = float(cfg["fs"])
    cascade = design_butterworth_bandpass(_bandpass(cfg, fs))
    sos = cascade.sos()
    rows = ["section,b0,b1,b2,a0,a1,a2"]
    rows += [f"{i}," + ",".join(repr(float(v)) for v in sec) for i, sec in enumerate(sos)]
    coeffs = "\r\n".join(rows) + "\r\n"
    step = float(cfg["response_step"])
    freqs = np.arange(0.0, fs / 2, step)
    mags = magnitude_response(cascade, freqs, fs)
    resp = "freq_hz,magnitude_db\r\n" + "".join(
        f"{f:.6g},{m:.6f}\r\n" for f, m in zip(freqs, mags)
    )
    os.makedirs(cfg["output_dir"], exist_ok=True)
    _write(cfg, "filter_coefficients.csv", coeffs)
    _write(cfg, "filter_response.csv", resp)
    sys.stdout.write(coeffs.replace("\r\n", "\n"))


def _load_subjects(cfg):
    sets = [read_epochs(p) for p in _inputs(cfg)]
    if not _bool(cfg, "pool_sessions"):
        return [s.replace(subject_id=f"{s.subject_id}") for s in sets]
    grouped = {}
    for s in sets:
        grouped.setdefault(s.subject_id, []).append(s)
    return [concatenate(g) for g in grouped.values()]


def _methods(cfg):
    names = [n.lower() for n in _split(cfg["methods"])]
    specs, placeholders = [], []
    for name in names:
        if name in NOT_IMPLEMENTED:
            placeholders.append(name)
            continue
        specs.append(method_spec(name, m=_int(cfg, "m"), grid=_grid(cfg), protocol=cfg["protocol"]))
    if not specs:
        raise UsageError("no runnable methods configured")
    return specs, placeholders


def cmd_cv(cfg):
    specs, placeholders = _methods(cfg)
    subjects = _load_subjects(cfg)
    folds, seed, workers = _int(cfg, "folds"), _int(cfg, "seed"), _int(cfg, "workers")
    reports = []
    for epochs in subjects:
        for spec in specs:
            reports.append(kfold_cv(epochs, spec, folds, seed, n_workers=workers))
    runs, summary, table = render_tables(reports, placeholders)
    os.makedirs(cfg["output_dir"], exist_ok=True)
    _write(cfg, "cv_runs.csv", runs)
    _write(cfg, "cv_summary.csv", summary)
    sys.stdout.write(table)
    return reports


def cmd_smallset(cfg):
    specs, placeholders = _methods(cfg)
    subjects = _load_subjects(cfg)
    fractions = [Fraction(v).limit_denominator(1000) for v in _split(cfg["fractions"])]
    seed, workers = _int(cfg, "seed"), _int(cfg, "workers")
    for epochs in subjects:
        for f in fractions:
            # Raises ValidationError (exit 2) before any work is done.
            stratified_subsample(epochs.labels, float(f), seed)
    reports = []
    for epochs in subjects:
        for spec in specs:
            reports.extend(subsample_experiment(
                epochs, spec, fractions, _int(cfg, "replicates"), seed, n_workers=workers))
    os.makedirs(cfg["output_dir"], exist_ok=True)
    _write(cfg, "smallset_runs.csv", runs_csv(reports))
    _write(cfg, "smallset_curve.csv", learning_curve_csv(reports, placeholders))
    sys.stdout.write(text_table(reports, placeholders))
    return reports


def cmd_synth_bench(cfg):
    dim = _int(cfg, "bench_ambient_dim")
    radii = _floats(cfg["bench_radii"], 2, "bench_radii")
    ns = [int(v) for v in _floats(cfg["bench_ns"], key="bench_ns")]
    sigmas = _floats(cfg["bench_sigmas"], key="bench_sigmas")
    n_seeds, n_test = _int(cfg, "bench_seeds"), _int(cfg, "bench_n_test")
    k, p, seed = _int(cfg, "bench_k"), _int(cfg, "bench_p"), _int(cfg, "seed")
    save = _bool(cfg, "bench_save_datasets")
    specs = concentric_circles(dim, radii, frame_seed=seed)
    delta = min_separation(*specs)
    os.makedirs(cfg["output_dir"], exist_ok=True)
    run_rows = ["n,sigma,seed,error_pct"]
    summary = ["n,sigma,delta,delta2_over_sigma2,mean_error_pct,std_error_pct"]
    for n in ns:
        for si, sigma in enumerate(sigmas):
            errors = []
            for s in range(n_seeds):
                train = sample_two_manifolds(*specs, n, sigma, derive_seed(seed, n, si, s, 0))
                test = sample_two_manifolds(*specs, n_test, sigma, derive_seed(seed, n, si, s, 1))
                model = spa_fit(train.features, k, p)
                pred = spa_predict(model, test.features.values)
                err = 100.0 * float(np.mean(pred != test.features.labels))
                errors.append(err)
                run_rows.append(f"{n},{sigma!r},{s},{err:.2f}")
                if save:
                    save_spa(model, os.path.join(cfg["output_dir"], f"bench_n{n}_s{si}_r{s}.spa"))
            snr = "inf" if sigma == 0 else f"{delta**2 / sigma**2:.6g}"
            std = float(np.std(errors, ddof=1)) if len(errors) > 1 else 0.0
            summary.append(f"{n},{sigma!r},{delta:.6g},{snr},{np.mean(errors):.2f},{std:.2f}")
    _write(cfg, "synth_bench_runs.csv", "\r\n".join(run_rows) + "\r\n")
    text = "\r\n".join(summary) + "\r\n"
    _write(cfg, "synth_bench.csv", text)
    sys.stdout.write(text.replace("\r\n", "\n"))


COMMANDS = {
    "convert": cmd_convert,
    "filter-design": cmd_filter_design,
    "cv": cmd_cv,
    "smallset": cmd_smallset,
    "synth-bench": cmd_synth_bench,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="spa-eeg", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("inputs", nargs="*", help="input files")
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key (repeatable)")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        write_manifest(cfg, args.command)
        COMMANDS[args.command](cfg)
    except PipelineFailure as exc:
        print(f"spa-eeg {args.command}: pipeline failure: {exc}", file=sys.stderr)
        return 3
    except (SpaEegError, ValueError, OSError) as exc:
        print(f"spa-eeg {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
