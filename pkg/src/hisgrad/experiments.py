"""
Running training runs, ablation suites and hyperparameter sweeps, and
aggregating their results.
"""
import itertools
import json
import os
from dataclasses import replace
from typing import *

import mlflow  # type: ignore
import numpy as np  # type: ignore
import pandas as pd  # type: ignore
from joblib import Parallel, delayed  # type: ignore

from .config import ABLATIONS, RunConfig, parse_override
from .trainer import Trainer
from .utils import logstartstop


class RunExistsError(FileExistsError):
    pass


def run_experiment(config: RunConfig,
                   out_dir,
                   force: bool = False,
                   tracking_uri: Optional[str] = None) -> Dict[str, Any]:
    """
    Train with the given configuration and write all artefacts to
    ``out_dir``.

    Parameters
    ----------
    config : RunConfig
    out_dir : path
        Created if absent.
    force : bool
        Overwrite a completed run in ``out_dir``.
    tracking_uri : str or None
        If given, the run is tracked in MLflow under this URI.

    Returns
    -------
    dict
        The run summary.
    """
    os.makedirs(out_dir, exist_ok=True)
    summary_path = os.path.join(out_dir, "summary.json")
    if os.path.exists(summary_path) and not force:
        raise RunExistsError(f"{out_dir} already holds a completed run")
    for name in ["summary.json", "metrics.csv"]:
        path = os.path.join(out_dir, name)
        if os.path.exists(path):
            os.remove(path)

    trainer = Trainer(config, out_dir=out_dir)
    if tracking_uri is None:
        trainer.fit()
    else:
        mlflow.set_tracking_uri(tracking_uri)
        with mlflow.start_run(
                run_name=f"{config.ablation}-seed{config.seed}"):
            mlflow.log_params(config.to_dict())
            trainer.fit()
    return trainer.summary()


def _run_entry(config, out_dir, force, tracking_uri):
    try:
        summary = run_experiment(config,
                                 out_dir,
                                 force=force,
                                 tracking_uri=tracking_uri)
    except Exception as e:
        return {"status": "failed", "error": f"{type(e).__name__}: {e}"}
    return summary


def _entry_row(summary, **keys):
    final = summary.get("final") or {}
    return {
        **keys,
        "status": summary.get("status"),
        "final_return": final.get("ret_mean"),
        "steps_to_threshold": summary.get("steps_to_threshold"),
        "late_return_mean": summary.get("late_return_mean"),
        "late_return_std": summary.get("late_return_std"),
        "error": summary.get("error"),
    }


def _run_all(entries, force, tracking_uri, n_jobs):
    return Parallel(n_jobs=n_jobs)(
        delayed(_run_entry)(config, out_dir, force, tracking_uri)
        for config, out_dir in entries)


def median_table(df: pd.DataFrame, by: List[str]) -> pd.DataFrame:
    """
    Median over seeds of the numeric result columns per group.
    """
    columns = [
        "final_return", "steps_to_threshold", "late_return_mean",
        "late_return_std"
    ]
    numeric = df[by + columns].copy()
    numeric[columns] = numeric[columns].apply(pd.to_numeric,
                                              errors="coerce")
    return numeric.groupby(by, sort=False).median().reset_index()


def _write_csv(df, path):
    df.to_csv(path, index=False, na_rep="nan", lineterminator="\n")


@logstartstop
def ablate(config: RunConfig,
           modes: Sequence[str],
           seeds: Sequence[int],
           out_dir,
           force: bool = False,
           tracking_uri: Optional[str] = None,
           n_jobs: int = 1) -> Dict[str, Any]:
    """
    Run every combination of ablation mode and seed, each in
    ``out_dir/<mode>/seed<seed>``, and compare them.

    Writes ``comparison.csv`` (one row per run), ``medians.csv`` (medians
    over seeds per mode) and ``report.json``. Failing runs are recorded and
    do not stop the suite.

    Returns
    -------
    dict
        The report; ``no_bc_less_stable`` is ``True``/``False`` if both
        ``full`` and ``no_bc`` were run (``None`` otherwise) and tells
        whether the median late-training return deviation of ``no_bc``
        exceeds that of ``full``.
    """
    modes = list(modes)
    if len(modes) < 2:
        raise ValueError("An ablation needs at least two modes")
    for mode in modes:
        if mode not in ABLATIONS:
            raise ValueError(f"Unknown ablation mode {mode!r}, expected one "
                             f"of {list(ABLATIONS)}")
    if len(seeds) < 1:
        raise ValueError("An ablation needs at least one seed")

    keys = list(itertools.product(modes, seeds))
    entries = [(replace(config, ablation=mode, seed=seed),
                os.path.join(out_dir, mode, f"seed{seed}"))
               for mode, seed in keys]
    summaries = _run_all(entries, force, tracking_uri, n_jobs)

    df = pd.DataFrame([
        _entry_row(s, mode=mode, seed=seed)
        for (mode, seed), s in zip(keys, summaries)
    ])
    medians = median_table(df, ["mode"])
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(df, os.path.join(out_dir, "comparison.csv"))
    _write_csv(medians, os.path.join(out_dir, "medians.csv"))

    flag = None
    stds = medians.set_index("mode")["late_return_std"]
    if "full" in stds and "no_bc" in stds and np.all(
            np.isfinite(stds[["full", "no_bc"]])):
        flag = bool(stds["no_bc"] > stds["full"])
    report = {
        "modes": modes,
        "seeds": list(seeds),
        "runs": len(df),
        "failed": int(np.sum(df["status"] != "completed")),
        "no_bc_less_stable": flag,
    }
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        json.dump(report, f, indent=2)
    return report


def parse_grid(specs: Sequence[str]) -> Dict[str, List[Any]]:
    """
    Parse ``key=v1,v2,...`` grid specifications; values are read as TOML
    values where possible.
    """
    grid = {}
    for spec in specs:
        if "=" not in spec:
            raise ValueError(f"Grid {spec!r} is not of the form "
                             "key=v1,v2,...")
        key, values = spec.split("=", 1)
        grid[key.strip()] = [
            parse_override(f"{key}={v}")[1] for v in values.split(",")
        ]
    return grid


@logstartstop
def sweep(config: RunConfig,
          grid: Dict[str, Sequence[Any]],
          seeds: Sequence[int],
          out_dir,
          force: bool = False,
          tracking_uri: Optional[str] = None,
          n_jobs: int = 1) -> pd.DataFrame:
    """
    Run the full grid of hyperparameter values (times ``seeds``).

    Writes ``sweep.csv`` with the mean episode return over the last half of
    each run's steps and ``sweep_medians.csv`` with the medians over seeds.

    Returns
    -------
    DataFrame
        The medians.
    """
    names = list(grid)
    if len(names) == 0:
        raise ValueError("Empty sweep grid")
    points = list(itertools.product(*[grid[k] for k in names]))
    keys = list(itertools.product(points, seeds))
    entries = []
    for point, seed in keys:
        values = dict(zip(names, point))
        tag = "-".join(f"{k}={v}" for k, v in values.items())
        entries.append((replace(config, seed=seed, **values),
                        os.path.join(out_dir, tag, f"seed{seed}")))
    summaries = _run_all(entries, force, tracking_uri, n_jobs)

    df = pd.DataFrame([
        _entry_row(s, **dict(zip(names, point)), seed=seed)
        for (point, seed), s in zip(keys, summaries)
    ])
    medians = median_table(df, names)
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(df, os.path.join(out_dir, "sweep.csv"))
    _write_csv(medians, os.path.join(out_dir, "sweep_medians.csv"))
    return medians
