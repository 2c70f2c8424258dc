"""capskin command line: genmesh, calibrate, snr, train, predict and sweep.

Results go to stdout and artifacts into the output directory; logs go to
stderr and `<out>/capskin.log`. The exit status is the `exit_code` of the
raised CapskinError, 2 for argparse usage errors and 1 for anything else.
"""
import argparse
import json
import logging
import os
import sys
import traceback

import numpy as np

from capskin import calibration, locnet, meshgen
from capskin.config import load_run_config, write_run_config
from capskin.errors import EXIT_FAILED, EXIT_OK, CapskinError, StorageError, UsageError
from capskin.evalharness import emit_report, run_size_sweep
from capskin.geometry import discretize_surface, load_mesh, save_mesh
from capskin.log import start_logging, stop_logging
from capskin.records import N_SENSORS
from capskin.seeding import derive_rng
from capskin.skinsim import build_semicone_skin, save_grid

_LOGGER = logging.getLogger("capskin.cli")

DATASET_FILE = "dataset.jsonl"
SNR_FILE = "snr.json"
GRID_FILE = "grid.json"
MODEL_FILE = "model.json"
REPORT_CSV = "sweep_report.csv"
REPORT_JSON = "sweep_report.json"


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise StorageError("cannot create output directory %s: %s" % (path, e)) from e
    return path


def _write_json(doc, path):
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise StorageError("cannot write %s: %s" % (path, e)) from e


def _snr_document(report, dataset_path):
    return {
        "dataset": os.path.basename(dataset_path),
        "mean_db": report.mean_db if np.isfinite(report.mean_db) else None,
        "per_sensor_db": [float(v) if np.isfinite(v) else None for v in report.per_sensor_db],
        "undefined_sensors": np.nonzero(~report.defined)[0].tolist(),
    }


def cmd_genmesh(config, args):
    path = args.path or config.mesh
    mesh = meshgen.semicone(tuple(args.dims), args.theta_steps, args.slant_steps, args.top_ratio)
    header = "semicone %s mm, theta_steps %d, slant_steps %d, top_ratio %r" % (
        "x".join("%g" % d for d in args.dims), args.theta_steps, args.slant_steps, args.top_ratio,
    )
    save_mesh(mesh, path, header=header)
    _LOGGER.info("Wrote mesh %s: %d vertices, %d triangles", path, len(mesh.vertices), len(mesh.triangles))
    print(path)


def cmd_calibrate(config, args):
    mesh = load_mesh(config.mesh)
    out = _ensure_dir(config.out)
    grid = build_semicone_skin(mesh, config.layout_seed, config.simulator_config())
    noise = config.noise_spec("calibration")
    dataset = calibration.collect_dataset(
        mesh, grid, config.strategy, config.n, noise, derive_rng(config.seed, "calibration"),
        frame_count=config.frame_count, finger_sigma=config.finger_sigma,
        dense_spacing=config.dense_spacing, seed=config.seed,
    )
    dataset_path = os.path.join(out, DATASET_FILE)
    calibration.export_jsonl(dataset, dataset_path)
    report = calibration.compute_snr(dataset)
    _write_json(_snr_document(report, dataset_path), os.path.join(out, SNR_FILE))
    save_grid(grid, os.path.join(out, GRID_FILE))
    write_run_config(config, out)
    _LOGGER.info("Wrote %s", dataset_path)
    print("mean SNR: %.3f dB" % report.mean_db)


def cmd_snr(config, args):
    dataset = calibration.import_jsonl(args.dataset)
    out = _ensure_dir(config.out)
    report = calibration.compute_snr(dataset)
    _write_json(_snr_document(report, args.dataset), os.path.join(out, SNR_FILE))
    print("mean SNR: %.3f dB" % report.mean_db)


def cmd_train(config, args):
    dataset = calibration.import_jsonl(args.dataset)
    mesh = load_mesh(config.mesh)
    calibration.check_on_surface(dataset, mesh)
    surface = discretize_surface(mesh, config.surface_spacing)
    localizer = locnet.train(dataset, surface, config.train_config())
    model_out = args.model_out or os.path.join(_ensure_dir(config.out), MODEL_FILE)
    locnet.save(localizer, model_out)
    _LOGGER.info("Wrote model %s (%d surface points)", model_out, len(surface))
    print("final loss: %.6f mm^2" % localizer.train_loss_history[-1])


def _predict_image(args):
    if args.image is not None:
        if len(args.image) != N_SENSORS:
            raise UsageError("--image needs %d values, got %d" % (N_SENSORS, len(args.image)))
        return np.array(args.image, dtype=float), None
    if args.line is None:
        raise UsageError("--dataset needs --line N (1-based point log index)")
    dataset = calibration.import_jsonl(args.dataset)
    if not 1 <= args.line <= len(dataset):
        raise UsageError("--line %d outside [1, %d]" % (args.line, len(dataset)))
    log = dataset.point_logs[args.line - 1]
    return calibration.sensor_image(log, dataset.baseline).values, dataset.baseline


def cmd_predict(config, args):
    localizer = locnet.load(args.model)
    image, baseline = _predict_image(args)
    if baseline is not None and not calibration.detect_contact(image, baseline):
        _LOGGER.warning("no sensor exceeds the contact threshold; prediction is unreliable")
    projection = locnet.predict(localizer, image)
    x, y, z = projection.point
    print("%.6f %.6f %.6f %.6f" % (x, y, z, projection.distance))


def cmd_sweep(config, args):
    mesh = load_mesh(config.mesh)
    out = _ensure_dir(config.out)
    error_report, snr_report = run_size_sweep(config.experiment_config(), mesh)
    emit_report(error_report, snr_report, os.path.join(out, REPORT_CSV), "csv")
    emit_report(error_report, snr_report, os.path.join(out, REPORT_JSON), "json")
    write_run_config(config, out)
    for n, mean, std in error_report.by_size():
        snr = dict(snr_report.per_size)[n]
        print("n=%d error %.3f +- %.3f mm SNR %.3f dB" % (n, mean, std, snr))


def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", dest="config", help="flat TOML run configuration; flags override it")
    common.add_argument("--seed", dest="seed", type=int, help="global seed every random stream derives from")
    common.add_argument("--out", dest="out", help="output directory for artifacts and capskin.log")
    common.add_argument(
        "-l",
        "--loglevel",
        dest="loglevel",
        help="log events at this level and higher to stderr (DEBUG, INFO, WARNING, ERROR). "
        "Every level is always written to capskin.log in the output directory.",
    )
    return common


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="capskin",
        description="Simulate, calibrate, train and evaluate contact localization on a capacitive skin.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("genmesh", parents=[common], help="write the procedural semicone mesh")
    p.add_argument("path", nargs="?", help="output mesh path (default: the config's mesh key)")
    p.add_argument("--dims", nargs=3, type=float, metavar=("W", "D", "H"), default=list(meshgen.SEMICONE_DIMS),
                   help="base width, depth and height in mm (default: 142 164 81)")
    p.add_argument("--theta-steps", dest="theta_steps", type=int, default=meshgen.SEMICONE_THETA_STEPS)
    p.add_argument("--slant-steps", dest="slant_steps", type=int, default=meshgen.SEMICONE_SLANT_STEPS)
    p.add_argument("--top-ratio", dest="top_ratio", type=float, default=meshgen.SEMICONE_TOP_RATIO)
    p.set_defaults(func=cmd_genmesh, log_to_out=False)

    p = sub.add_parser("calibrate", parents=[common], help="collect a calibration dataset and its SNR")
    p.add_argument("--mesh", dest="mesh")
    p.add_argument("--strategy", dest="strategy", help="random_edge (random) or even_spacing (even)")
    p.add_argument("--n", dest="n", type=int, help="number of point logs")
    p.add_argument("--frame-count", dest="frame_count", type=int)
    p.add_argument("--sigma-read", dest="sigma_read", type=float)
    p.set_defaults(func=cmd_calibrate, log_to_out=True)

    p = sub.add_parser("snr", parents=[common], help="SNR report of an existing dataset file")
    p.add_argument("--dataset", dest="dataset", required=True)
    p.set_defaults(func=cmd_snr, log_to_out=True)

    p = sub.add_parser("train", parents=[common], help="train a localizer on a dataset file")
    p.add_argument("--dataset", dest="dataset", required=True)
    p.add_argument("--mesh", dest="mesh")
    p.add_argument("--model-out", dest="model_out", help="model path (default: <out>/model.json)")
    p.add_argument("--epochs", dest="epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--activation", dest="activation", choices=["relu", "tanh"])
    p.add_argument("--surface-spacing", dest="surface_spacing", type=float)
    p.set_defaults(func=cmd_train, log_to_out=True)

    p = sub.add_parser("predict", parents=[common], help="print the surface point for one sensor image")
    p.add_argument("--model", dest="model", required=True)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--image", dest="image", nargs="+", type=float, help="%d sensor image values" % N_SENSORS)
    source.add_argument("--dataset", dest="dataset", help="dataset file to take the image from")
    p.add_argument("--line", dest="line", type=int, help="1-based point log index within --dataset")
    p.set_defaults(func=cmd_predict, log_to_out=False)

    p = sub.add_parser("sweep", parents=[common], help="error and SNR versus training-set size")
    p.add_argument("--mesh", dest="mesh")
    p.add_argument("--sizes", dest="train_sizes", nargs="+", type=int)
    p.add_argument("--replicates", dest="replicates", type=int)
    p.add_argument("--validation-size", dest="validation_size", type=int)
    p.add_argument("--mode", dest="sweep_mode", choices=["nested", "independent"])
    p.add_argument("--train-strategy", dest="train_strategy")
    p.add_argument("--epochs", dest="epochs", type=int)
    p.add_argument("--workers", dest="workers", type=int)
    p.set_defaults(func=cmd_sweep, log_to_out=True)

    return parser


_OVERRIDE_KEYS = (
    "seed", "out", "loglevel", "mesh", "strategy", "n", "frame_count", "sigma_read",
    "epochs", "learning_rate", "activation", "surface_spacing",
    "train_sizes", "replicates", "validation_size", "sweep_mode", "train_strategy", "workers",
)


def _overrides(args):
    return {key: getattr(args, key) for key in _OVERRIDE_KEYS if getattr(args, key, None) is not None}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    start_logging(args.loglevel or "INFO")
    exit_code = EXIT_OK
    try:
        config = load_run_config(args.config, _overrides(args))
        start_logging(config.loglevel, _ensure_dir(config.out) if args.log_to_out else None)
        _LOGGER.debug("%s with %s", args.command, config)
        args.func(config, args)
    except CapskinError as e:
        _LOGGER.error("%s", e)
        exit_code = e.exit_code
    except KeyboardInterrupt as e:
        _LOGGER.warning("Exiting after keyboard interrupt %s", repr(e))
        exit_code = EXIT_FAILED
    except Exception as e:
        _LOGGER.error("Unexpected exception %s %s", repr(e), traceback.format_exc())
        exit_code = EXIT_FAILED
    finally:
        stop_logging()
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
