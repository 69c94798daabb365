"""Command-line front end: propagate, train, predict, conformity, verify.

Each subcommand reads a JSON config (``--config``), runs its pipeline,
and emits a JSON report, either to ``--out`` or to stdout. ``--seed``
overrides the config's seed so the same config can be swept across
seeds without editing files. All randomness in a run descends from
that one seed; identical config plus seed reproduces the report's
``results`` block byte for byte.

``verify`` needs no config: it builds a known-noise linear problem
internally, trains full-rank variational inference on it, and checks
the result against the closed-form conjugate posterior, exiting
nonzero when the tolerances are missed. It is the installed
self-check that the optimization machinery still lands on the exact
answer where one exists.

Failures from any pipeline stage surface as a structured JSON error on
stderr with the run mode and error type, and a nonzero exit code.
Log verbosity comes from the UNCERTLAB_LOG environment variable
(debug, info, warning, error).
"""

import argparse
import json
import logging
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .config import (PredictRun, VerifyRun, load_json, resolve_conformity,
                     resolve_predict, resolve_propagate, resolve_train,
                     resolve_verify)
from .conformity import Specification, classify, classify_virtual
from .conjugate import conjugate_posterior, conjugate_predictive
from .dataset import ingest_dataset, ingest_parts, make_dataset
from .errors import ConfigError, UncertLabError
from .model_io import load_model, save_model
from .propagation import (propagate_analytic, propagate_monte_carlo,
                          propagate_taylor1, propagate_taylor2,
                          sensitivity_budget, summarize)
from .regression import build_model
from .report import (build_report, decision_to_dict, file_sha256,
                     measurement_to_dict, train_result_to_dict,
                     virtual_measurement_to_dict, write_report)
from .rng import substream
from .vi import VIConfig, predict, train_vi

log = logging.getLogger("uncertlab")

_VERIFY_NOISE_SD = 0.2
_VERIFY_WEIGHTS = (1.0, 2.0, -1.0)
_VERIFY_QUERY = (0.3, -0.2)


def _configure_logging() -> None:
    level_name = os.environ.get("UNCERTLAB_LOG", "warning").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def _run_propagate(args) -> tuple[dict, int]:
    doc = load_json(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    run = resolve_propagate(doc, os.path.dirname(os.path.abspath(args.config)))

    if run.method == "analytic":
        result = propagate_analytic(run.expr, run.joint, k=run.k)
    elif run.method == "taylor1":
        result = propagate_taylor1(run.expr, run.joint, k=run.k)
    elif run.method == "taylor2":
        result = propagate_taylor2(run.expr, run.joint, k=run.k)
    else:
        result, ecdf = propagate_monte_carlo(
            run.expr, run.joint, M=run.M, seed=run.seed,
            coverage=run.coverage)
        result = summarize(result, run.k)
        if run.dump_samples is not None:
            np.savetxt(run.dump_samples, ecdf.sorted_values,
                       header="y", comments="", fmt="%.17g")
            log.info("wrote %d sorted samples to %s",
                     len(ecdf.sorted_values), run.dump_samples)

    results = {"measurement": measurement_to_dict(result)}
    if run.method != "monte_carlo":
        results["budget"] = sensitivity_budget(run.expr, run.joint)
    return build_report("propagate", run.resolved, results), 0


def _run_train(args) -> tuple[dict, int]:
    doc = load_json(args.config)
    if args.seed is not None:
        doc.setdefault("vi", {})["seed"] = args.seed
    run = resolve_train(doc, os.path.dirname(os.path.abspath(args.config)))

    data = ingest_dataset(run.dataset_path, run.target, run.features)
    log.info("dataset: %d records, %d features, %d rejected rows",
             data.n_records, data.n_features, data.n_rejected_rows)
    model = build_model(data, **run.model_kwargs)
    train = train_vi(model, data, run.vi_config)
    log.info("training: %d steps, converged=%s, F %.4g -> %.4g",
             train.n_steps, train.converged,
             train.initial_free_energy, train.final_free_energy)

    sha = file_sha256(run.dataset_path)
    save_model(run.model_out, model, train, run.vi_config, data.summary,
               dataset_sha256=sha, store_trajectory=run.store_trajectory)

    results = {
        "training": train_result_to_dict(train),
        "model_out": run.model_out,
        "n_rejected_rows": data.n_rejected_rows,
    }
    report = build_report("train", run.resolved, results,
                          dataset_summary=data.summary.to_dict(),
                          dataset_sha256=sha)
    return report, 0


def _predict_rows(run: PredictRun, model, posterior) -> list[dict]:
    if run.parts_path is not None:
        rows = ingest_parts(run.parts_path, model.feature_names)
    else:
        rows = run.parts_inline
        if rows.shape[1] != model.n_features:
            raise ConfigError(
                f"inline parts have {rows.shape[1]} feature(s), model "
                f"expects {model.n_features}")
    spec = Specification(*run.spec) if run.spec is not None else None
    out = []
    for row in rows:
        vm = predict(model, posterior, row, n_samples=run.n_samples,
                     k=run.k, seed=run.seed)
        entry = {"x": [float(v) for v in row]}
        entry.update(virtual_measurement_to_dict(vm))
        if spec is not None:
            entry["conformity"] = decision_to_dict(classify_virtual(vm, spec))
        out.append(entry)
    return out


def _run_predict(args) -> tuple[dict, int]:
    doc = load_json(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    run = resolve_predict(doc, os.path.dirname(os.path.abspath(args.config)))
    model, posterior, model_doc = load_model(run.model_path)
    results = {
        "parts": _predict_rows(run, model, posterior),
        "model_sha256": file_sha256(run.model_path),
    }
    report = build_report("predict", run.resolved, results,
                          dataset_summary=model_doc.get("dataset_summary"))
    return report, 0


def _run_conformity(args) -> tuple[dict, int]:
    doc = load_json(args.config)
    run = resolve_conformity(doc, args.lsl, args.usl)
    spec = Specification(run.lsl, run.usl)
    decisions = [decision_to_dict(classify(y, u, spec))
                 for y, u in run.measurements]
    results = {"decisions": decisions}
    return build_report("conformity", run.resolved, results), 0


def _verify_checks(run: VerifyRun) -> dict:
    """Train full-rank VI on a conjugate problem; compare to closed form."""
    rng = substream(run.seed, 0)
    x = rng.standard_normal((run.n_records, 2))
    w = np.array(_VERIFY_WEIGHTS)
    y = w[0] + x @ w[1:] + rng.standard_normal(run.n_records) * _VERIFY_NOISE_SD
    data = make_dataset(x, y, ("x1", "x2"))
    model = build_model(data, mean_degree=1, standardize=False,
                        fixed_noise_sd=_VERIFY_NOISE_SD)

    exact = conjugate_posterior(model, data.x, data.y)
    # window == max_steps disables the early stop so the cosine schedule
    # anneals fully; the covariance match is about 3x tighter that way
    config = VIConfig(family="full_rank", schedule="cosine",
                      learning_rate=0.02, n_mc=16, max_steps=4000,
                      tolerance=0.0, window=4000, seed=run.seed)
    train = train_vi(model, data, config)
    q = train.posterior

    mu_rel = float(np.linalg.norm(q.mu - exact.mu)
                   / np.linalg.norm(exact.mu))
    cov_rel = float(np.linalg.norm(q.covariance() - exact.cov)
                    / np.linalg.norm(exact.cov))
    query = np.array(_VERIFY_QUERY)
    pred_mean, pred_var = conjugate_predictive(model, exact, query)
    vm = predict(model, q, query, n_samples=run.n_samples, seed=run.seed)
    mean_rel = abs(vm.y_hat - pred_mean) / max(abs(pred_mean), 1e-12)
    var_rel = abs(vm.sigma_hat**2 - pred_var) / pred_var

    checks = {
        "posterior_mean_rel_error": mu_rel,
        "posterior_cov_frobenius_rel_error": cov_rel,
        "predictive_mean_rel_error": mean_rel,
        "predictive_var_rel_error": var_rel,
        "tolerances": {"posterior_mean": 0.02, "posterior_cov": 0.10,
                       "predictive_mean": 0.02, "predictive_var": 0.02},
        "n_steps": train.n_steps,
    }
    checks["passed"] = bool(
        mu_rel <= 0.02 and cov_rel <= 0.10
        and mean_rel <= 0.02 and var_rel <= 0.02)
    return checks


def _run_verify(args) -> tuple[dict, int]:
    doc = load_json(args.config) if args.config else {}
    if args.seed is not None:
        doc["seed"] = args.seed
    run = resolve_verify(doc)
    checks = _verify_checks(run)
    report = build_report("verify", run.resolved, {"conjugate_check": checks})
    return report, 0 if checks["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uncertlab",
        description="Measurement and virtual-measurement uncertainty "
                    "workbench")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="mode", required=True)

    def add(name: str, help_text: str, config_required: bool = True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=config_required,
                       help="JSON run configuration")
        p.add_argument("--out", help="write the JSON report here "
                                     "(default: stdout)")
        p.add_argument("--seed", type=int,
                       help="override the config's seed")
        return p

    add("propagate", "propagate input uncertainty through a model")
    add("train", "train the virtual-measurement posterior on a dataset")
    add("predict", "virtually measure new parts with a trained model")
    conf = add("conformity", "classify measurements against specification "
                             "limits")
    conf.add_argument("--lsl", type=float,
                      help="override the lower specification limit")
    conf.add_argument("--usl", type=float,
                      help="override the upper specification limit")
    add("verify", "run the built-in conjugate-posterior self-check",
        config_required=False)
    return parser


_RUNNERS = {
    "propagate": _run_propagate,
    "train": _run_train,
    "predict": _run_predict,
    "conformity": _run_conformity,
    "verify": _run_verify,
}


def main(argv: Optional[list[str]] = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        report, code = _RUNNERS[args.mode](args)
    except UncertLabError as err:
        error = {"error": {"mode": args.mode,
                           "type": type(err).__name__,
                           "message": str(err)}}
        print(json.dumps(error, indent=2), file=sys.stderr)
        return 1
    text = write_report(report, args.out)
    if args.out is None:
        print(text)
    else:
        log.info("wrote report to %s", args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
