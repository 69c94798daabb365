"""Run reports: the documentation record of every computation.

A report is a JSON document with four blocks: tool identity, the fully
resolved config (defaults materialized, seeds included), the results,
and a UTC timestamp. Everything outside the timestamp is a pure
function of config plus referenced inputs, so rerunning a config
reproduces the ``results`` block byte for byte; the test suite holds
the tool to that. Dataset-backed runs embed the dataset's summary
statistics and the SHA-256 of the file, not the data itself.
"""

import hashlib
import json
from datetime import datetime, timezone
from typing import Optional

from . import __version__
from .conformity import ConformityDecision
from .propagation import MeasurementResult, implied_coverage
from .vi import TrainResult, VirtualMeasurementResult

__all__ = [
    "REPORT_SCHEMA_VERSION",
    "file_sha256",
    "measurement_to_dict",
    "virtual_measurement_to_dict",
    "train_result_to_dict",
    "build_report",
    "write_report",
]

REPORT_SCHEMA_VERSION = 1


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def measurement_to_dict(r: MeasurementResult) -> dict:
    out = {
        "y": r.y,
        "u": r.u,
        "k": r.k,
        "U": r.U,
        "implied_coverage": implied_coverage(r.k),
        "interval": [r.interval[0], r.interval[1]],
        "method": r.method,
    }
    if r.mc_diagnostics is not None:
        out["mc_diagnostics"] = {
            "M": r.mc_diagnostics.M,
            "mc_standard_error": r.mc_diagnostics.mc_standard_error,
            "domain_error_count": r.mc_diagnostics.domain_error_count,
        }
    return out


def virtual_measurement_to_dict(vm: VirtualMeasurementResult) -> dict:
    return {
        "y_hat": vm.y_hat,
        "sigma_hat": vm.sigma_hat,
        "aleatoric_var": vm.aleatoric_var,
        "epistemic_var": vm.epistemic_var,
        "k": vm.k,
        "interval": [vm.interval[0], vm.interval[1]],
        "n_posterior_samples": vm.n_posterior_samples,
        "seed": vm.seed,
    }


def train_result_to_dict(t: TrainResult) -> dict:
    return {
        "family": t.posterior.family,
        "n_weights": t.posterior.n_weights,
        "n_steps": t.n_steps,
        "converged": t.converged,
        "initial_free_energy": t.initial_free_energy,
        "final_free_energy": t.final_free_energy,
    }


def decision_to_dict(d: ConformityDecision) -> dict:
    return d.to_dict()


def build_report(mode: str, resolved_config: dict, results: dict,
                 dataset_summary: Optional[dict] = None,
                 dataset_sha256: Optional[str] = None) -> dict:
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool": {"name": "uncertlab", "version": __version__},
        "mode": mode,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "config": resolved_config,
        "results": results,
    }
    if dataset_summary is not None:
        report["dataset_summary"] = dataset_summary
    if dataset_sha256 is not None:
        report["dataset_sha256"] = dataset_sha256
    return report


def write_report(report: dict, path: Optional[str]) -> str:
    """Serialize deterministically; write to ``path`` when given.

    Returns the serialized text either way, so callers can also print
    it to stdout.
    """
    text = json.dumps(report, indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
            fh.write("\n")
    return text
