"""Command-line surface: simulate, train, predict, evaluate, oob-scan.

Exit codes: 0 success, 2 configuration/validation error, 3 data
compatibility error (e.g. grid mismatch without --preprocess), 4 undefined
numerical result.  MRSQUANT_THREADS caps the worker count; --threads
overrides it.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import fileio
from .basis import default_brain_basis
from .dataset import config_fingerprint, dataset_from_labeled
from .errors import (
    FileFormatError,
    GridCompatibilityError,
    UndefinedResultError,
    ValidationError,
)
from .evaluate import EXPERIMENT_NAMES, ExperimentSpec, run_experiment
from .forest import ForestConfig
from .pipeline import features_for_dataset, train_model
from .simulate import SimulationConfig, simulate_dataset

DEFAULT_ACQUISITION = {"spectral_width_hz": 2500.0, "n_points": 1024,
                       "transmitter_freq_mhz": 127.7, "echo_time_ms": 35.0,
                       "repetition_time_ms": 2000.0}


def resolve_threads(flag_value):
    if flag_value is not None:
        return max(1, int(flag_value))
    env = os.environ.get("MRSQUANT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as e:
            raise ValidationError(f"MRSQUANT_THREADS must be an integer, got {env!r}") from e
    return 1


def _read_json_config(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise ValidationError(f"cannot read config file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise FileFormatError(f"{path}: malformed JSON at line {e.lineno}: {e.msg}") from e


def _build_sim_config(args):
    file_cfg = _read_json_config(args.config) if args.config else {}
    cfg = {
        "acquisition": dict(DEFAULT_ACQUISITION),
        "reference_ppm": 4.7,
    }
    cfg.update(file_cfg)
    if args.seed is not None:
        cfg["rng_seed"] = args.seed
    if args.n_spectra is not None:
        cfg["n_spectra"] = args.n_spectra
    if "rng_seed" not in cfg:
        raise ValidationError("simulate needs --seed (field rng_seed)")
    if "n_spectra" not in cfg:
        raise ValidationError("simulate needs --n-spectra (field n_spectra)")
    params = fileio.acquisition_from_dict(cfg["acquisition"])
    if args.basis:
        basis = fileio.read_basis(args.basis)
        cfg["acquisition"] = fileio.acquisition_to_dict(basis.params)
        cfg["reference_ppm"] = basis.reference_ppm
        cfg["basis"] = fileio.basis_to_dict(basis)
    elif "basis" not in cfg:
        cfg["basis"] = fileio.basis_to_dict(default_brain_basis(params, cfg["reference_ppm"]))
    for key, default in (
        ("concentration_ranges", None),
        ("t2_scale_range", None),
        ("snr_range", None),
        ("baseline_amplitude_range", None),
        ("lipid_amplitude_range", None),
    ):
        cfg.setdefault(key, default)
    defaults = SimulationConfig(
        basis=default_brain_basis(params, cfg["reference_ppm"]), n_spectra=1, rng_seed=0
    )
    if cfg["concentration_ranges"] is None:
        cfg["concentration_ranges"] = {k: list(v) for k, v in defaults.concentration_ranges.items()}
    for key, attr in (
        ("t2_scale_range", "t2_scale_range"),
        ("snr_range", "snr_range"),
        ("baseline_amplitude_range", "baseline_amplitude_range"),
        ("lipid_amplitude_range", "lipid_amplitude_range"),
    ):
        if cfg[key] is None:
            cfg[key] = list(getattr(defaults, attr))
    return fileio.sim_config_from_dict(cfg)


def cmd_simulate(args):
    config = _build_sim_config(args)
    threads = resolve_threads(args.threads)
    labeled = simulate_dataset(config, threads=threads)
    config_dict = fileio.sim_config_to_dict(config)
    dataset = dataset_from_labeled(labeled, config_dict, target_names=config.target_names)
    fileio.write_dataset(args.output, dataset)
    print(f"wrote {dataset.n_spectra} spectra to {args.output}")
    print(f"seed={config.rng_seed} fingerprint={dataset.fingerprint}")
    print(f"targets={','.join(dataset.target_names)}")
    for name, rng in config.concentration_ranges.items():
        print(f"range {name}: [{rng[0]}, {rng[1]}]")
    return 0


def _forest_config_from_args(args, required_seed=True):
    if required_seed and args.seed is None:
        raise ValidationError("train needs --seed")
    max_depth = None
    if args.max_depth is not None and str(args.max_depth).lower() not in ("none", "unlimited"):
        max_depth = int(args.max_depth)
    return ForestConfig(
        n_trees=args.trees,
        max_features=args.max_features,
        min_leaf_size=args.min_leaf,
        max_depth=max_depth,
        rng_seed=args.seed if args.seed is not None else 0,
        bootstrap=args.bootstrap,
    )


def cmd_train(args):
    dataset = fileio.read_dataset(args.dataset)
    if dataset.labels is None:
        raise ValidationError(f"{args.dataset}: dataset has no labels; cannot train")
    config = _forest_config_from_args(args)
    threads = resolve_threads(args.threads)
    model = train_model(dataset, config, threads=threads)
    fileio.write_model(args.output, model)
    oob_path = args.oob_csv or args.output + ".oob.csv"
    entries = [
        (name, config.max_features, curve)
        for name, curve in zip(model.target_names, model.oob_curves)
        if curve is not None
    ]
    fileio.write_oob_csv(oob_path, entries, fileio.model_fingerprint(model))
    print(f"trained {config.n_trees} trees x {len(model.target_names)} targets from {args.dataset}")
    for name in model.target_names:
        print(f"oob[{name}] = {model.oob_error(name):.6g}")
    print(f"model written to {args.output}; OOB curve to {oob_path}")
    return 0


def cmd_predict(args):
    model = fileio.read_model(args.model)
    dataset = fileio.read_dataset(args.spectra)
    estimates = np.asarray(
        model.predict_matrix(
            features_for_dataset(model.feature_meta, dataset, allow_resample=args.preprocess)
        )
    )
    fileio.write_predictions_csv(args.output, model.target_names, estimates,
                                 fileio.model_fingerprint(model))
    print(f"predicted {estimates.shape[0]} spectra -> {args.output}")
    return 0


def cmd_evaluate(args):
    cfg = _read_json_config(args.config)
    name = cfg.get("experiment")
    if name not in EXPERIMENT_NAMES:
        raise ValidationError(
            f"unknown experiment {name!r}; valid names: {', '.join(EXPERIMENT_NAMES)}"
        )
    if "seed" not in cfg:
        raise ValidationError("evaluate config needs field seed")
    fdict = dict(cfg.get("forest", {}))
    fdict.setdefault("n_trees", 100)
    fdict.setdefault("max_features", 64)
    fdict.setdefault("min_leaf_size", 5)
    fdict.setdefault("max_depth", None)
    fdict.setdefault("rng_seed", cfg["seed"])
    forest = fileio.forest_config_from_dict(fdict)
    spec = ExperimentSpec(
        name=name,
        forest=forest,
        seed=cfg["seed"],
        k_folds=cfg.get("k_folds", 10),
        baseline_degree=cfg.get("baseline_degree", 4),
        preprocess=cfg.get("preprocess"),
    )
    paths = cfg.get("datasets", {})
    datasets = {}
    for role in ("train", "test", "data"):
        if role in paths:
            datasets[role] = fileio.read_dataset(paths[role])
    needed = {"real-real-spectra": ("data",)}.get(name, ("train", "test"))
    for role in needed:
        if role not in datasets:
            raise ValidationError(f"experiment {name} needs datasets.{role} in the config")
    threads = resolve_threads(args.threads)
    report = run_experiment(spec, datasets, threads=threads)
    report.inputs["experiment_config_fingerprint"] = config_fingerprint(cfg)
    fileio.write_report(args.output, report)
    csv_path = args.csv or args.output + ".samples.csv"
    fileio.write_samples_csv(csv_path, report)
    print(f"experiment {name} (truth: {report.truth_source})")
    for target in report.target_names:
        stats = report.summary[target]["forest"]
        print(
            f"{target}: median={stats['median_error']:.4f} mean={stats['mean_error']:.4f} "
            f"pearson_r={stats['pearson_r']:.4f}"
        )
    print(f"report written to {args.output}; samples CSV to {csv_path}")
    return 0


def cmd_oob_scan(args):
    dataset = fileio.read_dataset(args.dataset)
    if dataset.labels is None:
        raise ValidationError(f"{args.dataset}: dataset has no labels; cannot scan")
    threads = resolve_threads(args.threads)
    try:
        features = [int(v) for v in args.features.split(",") if v.strip()]
    except ValueError as e:
        raise ValidationError(f"--features must be a comma-separated integer list: {e}") from e
    if not features:
        raise ValidationError("--features must name at least one value")
    entries = []
    scan_cfg = {"dataset_fingerprint": dataset.fingerprint, "trees": args.trees,
                "features": features, "seed": args.seed, "min_leaf": args.min_leaf}
    for mf in features:
        config = ForestConfig(n_trees=args.trees, max_features=mf, min_leaf_size=args.min_leaf,
                              max_depth=None, rng_seed=args.seed)
        model = train_model(dataset, config, threads=threads)
        for name, curve in zip(model.target_names, model.oob_curves):
            entries.append((name, mf, curve))
        print(f"max_features={mf}: " + " ".join(
            f"oob[{name}]={model.oob_error(name):.6g}" for name in model.target_names
        ))
    fileio.write_oob_csv(args.output, entries, config_fingerprint(scan_cfg))
    print(f"OOB sweep written to {args.output}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mrsquant",
        description="Simulate MR spectra, train forest quantifiers, and evaluate them "
                    "against a least-squares basis-fit baseline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a labeled synthetic dataset")
    p.add_argument("--config", help="JSON simulation config (defaults used for absent fields)")
    p.add_argument("--seed", type=int, required=True, help="RNG seed (mandatory)")
    p.add_argument("--output", required=True)
    p.add_argument("--n-spectra", type=int, dest="n_spectra")
    p.add_argument("--basis", help="basis-set JSON file overriding the built-in basis")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a random-forest model on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, required=True, help="RNG seed (mandatory)")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-features", type=int, default=64, dest="max_features")
    p.add_argument("--min-leaf", type=int, default=5, dest="min_leaf")
    p.add_argument("--max-depth", default=None, dest="max_depth")
    p.add_argument("--bootstrap", choices=["sample", "identity"], default="sample")
    p.add_argument("--oob-csv", dest="oob_csv")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="quantify spectra with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--spectra", required=True, help="dataset file holding the spectra")
    p.add_argument("--output", required=True)
    p.add_argument("--preprocess", action="store_true",
                   help="crop/resample/normalize spectra from a different protocol")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="run one of the four experiment designs")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--output", required=True, help="report JSON path")
    p.add_argument("--csv", help="per-sample CSV path (default: <output>.samples.csv)")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("oob-scan", help="sweep n_trees x max_features, emit the OOB grid CSV")
    p.add_argument("--dataset", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--trees", type=int, default=200)
    p.add_argument("--features", default="1,4,16,64,256",
                   help="comma-separated max_features values")
    p.add_argument("--min-leaf", type=int, default=5, dest="min_leaf")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_oob_scan)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GridCompatibilityError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ValidationError, FileFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except UndefinedResultError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
