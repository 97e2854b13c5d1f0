"""Command-line entry points.

Five subcommands cover the workflow: ``simulate`` materializes a
synthetic dataset, ``fit`` trains a stacked model on a manifest and
saves it with its coefficient table, ``evaluate`` runs the repeated
nested-CV benchmark for one of four methods, ``mrm`` computes the
per-view importance table for a saved model, and ``predict`` scores new
observations.  Outputs are plain text tables (CSV/JSON); plotting is
left to external tooling.

Every command is a pure function of its input files, flags, and seed:
invoking it twice writes byte-identical files.  Exit codes are fixed
for scriptability:

    1  bad usage / invalid flag values
    2  dataset or generator-spec loading failed
    3  model fitting failed
    4  could not write outputs
    5  model file corrupt or unreadable
    6  model/data schema mismatch

``STAPLR_LOG`` (DEBUG, INFO, WARNING, ERROR) controls log verbosity on
stderr; the default is WARNING.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import evaluation, importance, stacking, views
from .glm import InputDataError

log = logging.getLogger("staplr")

EXIT_USAGE = 1
EXIT_LOAD = 2
EXIT_FIT = 3
EXIT_IO = 4
EXIT_MODEL_CORRUPT = 5
EXIT_SCHEMA = 6

METHODS = ("staplr", "staplr2-measures", "staplr2-scantypes", "elasticnet")


class UsageError(Exception):
    """Invalid flag values (maps to exit code 1)."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the exit-code contract says 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


@dataclass(frozen=True)
class RunConfig:
    """Everything one command invocation needs, assembled from flags.

    The penalty fields have no flags; they exist for programmatic use
    (tests, notebooks) and default to the standard ridge/nonnegative
    lasso pair when None.
    """

    command: str
    manifest: Path | None = None
    out: Path | None = None
    model: Path | None = None
    spec: Path | None = None
    seed: int | None = None
    k_outer: int = 10
    k_inner: int = 10
    repetitions: int = 10
    method: str = "staplr"
    threads: int | None = None
    mrm_a: float = 0.0
    mrm_b: float = 1.0
    mrm_c: float | None = None
    threshold: float = 0.5
    leaf_penalty: object = None
    node_penalty: object = None

    @property
    def worker_count(self):
        return self.threads if self.threads else (os.cpu_count() or 1)


def _build_parser():
    parser = _Parser(prog="staplr",
                     description="Hierarchical stacked penalized logistic "
                                 "regression for multi-view data.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        return sub.add_parser(name, help=help_text)

    p = add("fit", "fit a stacked model on a dataset manifest")
    p.add_argument("--manifest", required=True, type=Path,
                   help="dataset manifest (JSON)")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--seed", required=True, type=int,
                   help="master seed for all fold draws")
    p.add_argument("--k-inner", type=int, default=10,
                   help="folds for penalty tuning (default 10)")

    p = add("evaluate", "repeated nested cross-validation benchmark")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", required=True, type=int,
                   help="master seed; fixes every fold assignment")
    p.add_argument("--method", default="staplr", choices=METHODS,
                   help="modeling procedure (default staplr)")
    p.add_argument("--k-outer", type=int, default=10)
    p.add_argument("--k-inner", type=int, default=10)
    p.add_argument("--reps", type=int, default=10,
                   help="number of outer-CV repetitions (default 10)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker thread cap (default: available cores); "
                        "results are identical for any value")

    p = add("mrm", "per-view importance table for a saved model")
    p.add_argument("--model", required=True, type=Path, help="model file")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--mrm-a", type=float, default=0.0,
                   help="lower pin for the target view (default 0)")
    p.add_argument("--mrm-b", type=float, default=1.0,
                   help="upper pin for the target view (default 1)")
    p.add_argument("--mrm-c", type=float, default=None,
                   help="pin for all other views (default: training "
                        "class-1 proportion)")

    p = add("simulate", "materialize a synthetic dataset from a spec file")
    p.add_argument("--spec", required=True, type=Path,
                   help="generator spec (JSON: shape, n, signal, correlation)")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", required=True, type=int)

    p = add("predict", "score new observations with a saved model")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--threshold", type=float, default=0.5,
                   help="classification cut-off (default 0.5; ties -> 1)")

    return parser


def _config_from_args(args):
    return RunConfig(
        command=args.command,
        manifest=getattr(args, "manifest", None),
        out=getattr(args, "out", None),
        model=getattr(args, "model", None),
        spec=getattr(args, "spec", None),
        seed=getattr(args, "seed", None),
        k_outer=getattr(args, "k_outer", 10),
        k_inner=getattr(args, "k_inner", 10),
        repetitions=getattr(args, "reps", 10),
        method=getattr(args, "method", "staplr"),
        threads=getattr(args, "threads", None),
        mrm_a=getattr(args, "mrm_a", 0.0),
        mrm_b=getattr(args, "mrm_b", 1.0),
        mrm_c=getattr(args, "mrm_c", None),
        threshold=getattr(args, "threshold", 0.5),
    )


def _write_coefficient_csv(path, table):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("node", "input", "coefficient", "selected"))
        for row in table:
            for inp, coef, sel in zip(row.inputs, row.coefficients,
                                      row.selected):
                w.writerow((row.name, inp, repr(float(coef)), int(sel)))


def cmd_fit(config):
    data = views.load_dataset(config.manifest)
    log.info("loaded %d observations, %d leaves", data.n_observations,
             len(data.hierarchy.leaves()))
    cfg_kwargs = {"seed": config.seed, "k": config.k_inner}
    if config.leaf_penalty is not None:
        cfg_kwargs["leaf_penalty"] = config.leaf_penalty
    if config.node_penalty is not None:
        cfg_kwargs["node_penalty"] = config.node_penalty
    model = stacking.fit_staplr(data, stacking.StaplrConfig(**cfg_kwargs))
    config.out.mkdir(parents=True, exist_ok=True)
    stacking.save_model(model, config.out / "model.json")
    _write_coefficient_csv(config.out / "coefficients.csv",
                           importance.coefficient_table(model))
    log.info("model written to %s", config.out / "model.json")
    return 0


def _make_fitter(config):
    if config.method == "elasticnet":
        return evaluation.elastic_net_fitter()
    return evaluation.staplr_fitter(
        leaf_penalty=config.leaf_penalty, node_penalty=config.node_penalty,
        mrm_a=config.mrm_a, mrm_b=config.mrm_b, mrm_c=config.mrm_c)


def cmd_evaluate(config):
    data = views.load_dataset(config.manifest)
    if config.method == "staplr2-measures":
        # two-level variant: every leaf directly under the root
        data = views.flatten_to_leaves(data)
    elif config.method == "staplr2-scantypes":
        # two-level variant: one concatenated leaf per top-level branch
        data = views.flatten_at_top(data)
    try:
        nested = evaluation.NestedCvConfig(
            master_seed=config.seed, k_outer=config.k_outer,
            k_inner=config.k_inner, repetitions=config.repetitions)
    except evaluation.MetricError as e:
        raise UsageError(str(e))
    fitter = _make_fitter(config)
    log.info("evaluating %s: %d reps x %d outer folds, %d threads",
             config.method, nested.repetitions, nested.k_outer,
             config.worker_count)
    report = evaluation.nested_cv_evaluate(data, fitter, nested,
                                           threads=config.worker_count)
    paths = evaluation.write_report(report, config.out, config.method)
    log.info("wrote %d report files to %s", len(paths), config.out)
    return 0


def cmd_mrm(config):
    if config.mrm_a >= config.mrm_b:
        raise UsageError("--mrm-a must be strictly below --mrm-b")
    model = stacking.load_model(config.model)
    try:
        spec = importance.MrmSpec(
            a=config.mrm_a, b=config.mrm_b,
            c=model.ybar if config.mrm_c is None else config.mrm_c)
    except InputDataError as e:
        raise UsageError(str(e))
    report = importance.mrm_report(model, spec, model_id=str(config.model))
    config.out.mkdir(parents=True, exist_ok=True)
    path = config.out / "mrm.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("leaf", "mrm", "a", "b", "c"))
        for leaf, value in report.values:
            w.writerow((leaf, repr(float(value)), repr(spec.a), repr(spec.b),
                        repr(spec.c)))
    log.info("importance table written to %s", path)
    return 0


def cmd_simulate(config):
    try:
        raw = json.loads(config.spec.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise views.DatasetLoadError(f"cannot read generator spec: {e}")
    if not isinstance(raw, dict):
        raise views.DatasetLoadError("generator spec must be a JSON object")
    try:
        spec = views.SyntheticSpec(
            shape=raw.get("shape", {}),
            n=raw.get("n", 0),
            seed=config.seed,
            signal=raw.get("signal", {}),
            correlation=raw.get("correlation", 0.0))
    except (InputDataError, TypeError, ValueError) as e:
        raise views.DatasetLoadError(f"invalid generator spec: {e}")
    data = views.generate_synthetic(spec)
    manifest = views.write_dataset(data, config.out)
    log.info("synthetic dataset written, manifest %s", manifest)
    return 0


def cmd_predict(config):
    model = stacking.load_model(config.model)
    try:
        data = views.load_dataset(config.manifest)
        probs = stacking.predict_stacked(model, data)
    except (views.MissingDataFileError, views.EmptyViewError,
            InputDataError) as e:
        # data does not match the model's training-time snapshot
        raise stacking.ModelSchemaError(str(e))
    # same decision rule as classify(), without a second prediction pass
    classes = (probs >= config.threshold).astype(int)
    config.out.mkdir(parents=True, exist_ok=True)
    path = config.out / "predictions.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("observation_id", "probability", "class"))
        for oid, p, c in zip(data.observation_ids, probs, classes):
            w.writerow((oid, repr(float(p)), int(c)))
    log.info("predictions written to %s", path)
    return 0


_COMMANDS = {
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
    "mrm": cmd_mrm,
    "simulate": cmd_simulate,
    "predict": cmd_predict,
}


def _setup_logging():
    level = os.environ.get("STAPLR_LOG", "WARNING").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        level = "WARNING"
    logging.basicConfig(level=getattr(logging, level),
                        format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def main(argv=None):
    _setup_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        config = _config_from_args(args)
        return _COMMANDS[config.command](config)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except views.DatasetLoadError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_LOAD
    except stacking.ModelSchemaError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except stacking.ModelFileError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MODEL_CORRUPT
    except (stacking.NodeFitError, InputDataError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FIT
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
