"""Command-line interface: ``sepglm {fit,detect,simulate,gof,bootstrap,cv}``.

Every subcommand reads a JSON run configuration (see :mod:`sepglm.config`),
writes its reports under ``--out`` and exits with 0 on success, 2 on a
configuration error, 3 on a data error and 4 on a numerical failure.
Numeric reports depend only on the configuration and the seed; run times
and memory use go to ``timing.json`` (and the two resource columns of
``comparison.csv``).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, gof, report
from .bootstrap import bootstrap_ci
from .config import RunConfig, load_config, simulation_spec
from .data import TEST, TRAIN, TrialSet, load_trials, simulate_spike_train, write_trials
from .design import build_design
from .errors import ConfigError, DataError, NumericalError, SepGLMError
from .separation import classify_perfect, detect_separation, predicted_spike_count
from .strategies import COMPARISON, DEFAULT_GRIDS, fit_strategy, select_hyperparameter

log = logging.getLogger("sepglm")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

COMPARISON_COLUMNS = [
    "strategy", "label", "R", "R_CV", "params", "edof_ratio",
    "relative_run_time", "relative_peak_memory",
]
TIMING_COLUMNS = ("relative_run_time", "relative_peak_memory")


# ---------------------------------------------------------------------------
# shared plumbing


def _load(cfg: RunConfig) -> TrialSet:
    if cfg.spikes is None or cfg.stimulus is None:
        raise ConfigError("data.spikes and data.stimulus: both paths are required")
    trials = load_trials(cfg.spikes, cfg.stimulus, cfg.bin_width)
    if cfg.test_trials:
        known = set(trials.ids)
        test = []
        for i, tid in enumerate(cfg.test_trials):
            if tid not in known:
                raise ConfigError(f"data.test_trials[{i}]: unknown trial id {tid!r}")
            test.append(tid)
        train = [t for t in trials.ids if t not in set(test)]
        if not train:
            raise ConfigError("data.test_trials: no training trials left")
        trials = trials.with_roles(train, test)
    return trials


def _designs(cfg: RunConfig, trials: TrialSet):
    d_train = build_design(trials, cfg.p, cfg.q, cfg.band_edges, role=TRAIN)
    d_test = None
    if any(t.role == TEST for t in trials):
        d_test = build_design(trials, cfg.p, cfg.q, d_train.band_edges, role=TEST)
    return d_train, d_test


def _strategies(cfg: RunConfig):
    if cfg.strategies:
        return cfg.strategies
    return [cfg.strategy({"name": n}, "strategies") for n in COMPARISON]


def _staged(name: str, stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except SepGLMError as exc:
        raise type(exc)(f"strategy {name} ({stage}): {exc}") from exc


def _fit_record(fit, d) -> dict:
    names = d.names
    try:
        se = np.sqrt(np.clip(np.diag(fit.covariance()), 0.0, None))
    except NumericalError:
        se = np.full(d.k, np.nan)
    return {
        "strategy": fit.strategy,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "status": fit.info.get("status"),
        "loglik": fit.loglik,
        "coefficients": [
            {
                "name": n,
                "beta": fit.beta[j],
                "se": se[j],
                "divergent": bool(fit.divergent[j]),
            }
            for j, n in enumerate(names)
        ],
        "fit_beta": fit.fit_beta,
        "limit_signs": fit.info.get("limit_signs", {}),
        "limit_combos": fit.limit_combos,
        "objective_decreases": fit.info.get("objective_decreases", 0),
        "max_jitter": fit.info.get("max_jitter", 0.0),
    }


def _params_plot(path, fit, d, title):
    est = np.asarray(fit.beta, dtype=float)
    try:
        se = np.sqrt(np.clip(np.diag(fit.covariance()), 0.0, None))
    except NumericalError:
        se = np.full(est.shape, np.nan)
    with np.errstate(invalid="ignore"):
        lo, hi = est - 1.96 * se, est + 1.96 * se
    report.write_text(path, report.params_svg(d.names, est, lo, hi, title))


# ---------------------------------------------------------------------------
# subcommands


def cmd_fit(cfg: RunConfig) -> dict:
    trials = _load(cfg)
    d_train, d_test = _designs(cfg, trials)
    sep = detect_separation(d_train)
    out = Path(cfg.out)
    report.write_json(out / "separation.json", sep)

    strategies = _strategies(cfg)
    # the unmodified fit is the reference for every ratio; it is always run
    # first, serially, so timings are not skewed by contention
    reference = cfg.strategy({"name": "standard_irls"}, "strategies")
    ref_fit, ref_t, ref_mem = _staged(
        "standard_irls", "fit", gof.measure, fit_strategy, reference, d_train, sep
    )
    ref_edof = _staged("standard_irls", "gof", gof.effective_dof, ref_fit, d_train)

    rows, results, timing = [], {}, {}
    for s in strategies:
        if s.name == "standard_irls":
            fit, t, mem = ref_fit, ref_t, ref_mem
        else:
            fit, t, mem = _staged(s.name, "fit", gof.measure, fit_strategy, s, d_train, sep)
        g = _staged(s.name, "gof", gof.gof_report, fit, d_train, d_test, ref_edof)
        record = _fit_record(fit, d_train)
        report.write_json(out / s.name / "fit.json", {"config": s.to_dict(), **record})
        report.write_json(out / s.name / "gof.json", g.numeric_dict())
        _params_plot(out / s.name / "params.svg", fit, d_train, f"{s.label}: exp(beta) with 95% Wald band")
        results[s.name] = {"config": s.to_dict(), "gof": g.numeric_dict(), "converged": fit.converged}
        timing[s.name] = {
            "runtime_s": t,
            "peak_memory_bytes": mem,
            "relative_run_time": t / ref_t if ref_t > 0 else None,
            "relative_peak_memory": mem / ref_mem if ref_mem > 0 else None,
        }
        rows.append(
            {
                "strategy": s.name,
                "label": s.label,
                "R": g.R,
                "R_CV": g.R_CV,
                "params": g.n_params,
                "edof_ratio": g.edof_ratio,
                "relative_run_time": timing[s.name]["relative_run_time"],
                "relative_peak_memory": timing[s.name]["relative_peak_memory"],
            }
        )

    report.write_csv(out / "comparison.csv", rows, COMPARISON_COLUMNS)
    report.write_json(
        out / "report.json",
        {
            "sepglm_version": __version__,
            "seed": cfg.seed,
            "design": {"p": cfg.p, "q": cfg.q, "n_rows": d_train.n, "n_columns": d_train.k,
                       "band_edges": d_train.band_edges,
                       "n_test_rows": 0 if d_test is None else d_test.n,
                       "test_spikes_in_predicted_bins":
                           None if d_test is None else predicted_spike_count(sep, d_test)},
            "separation": sep,
            "results": results,
        },
    )
    report.write_json(out / "timing.json", timing)
    _print_table(rows)
    return {"rows": rows, "timing": timing}


def _print_table(rows):
    print(f"{'strategy':<16} {'R':>8} {'R_CV':>16} {'params':>7} {'edof':>7}")
    for r in rows:
        rcv = "-" if r["R_CV"] is None else gof.describe_R(r["R_CV"])
        ratio = "-" if r["edof_ratio"] is None else f"{r['edof_ratio']:.3f}"
        print(f"{r['strategy']:<16} {gof.describe_R(r['R']):>8} {rcv:>16} {r['params']:>7} {ratio:>7}")


def cmd_detect(cfg: RunConfig) -> dict:
    trials = _load(cfg)
    d_small, _ = _designs(cfg, trials)
    sep = detect_separation(d_small)
    large_trials = None
    aug_s, aug_t = cfg.detect.get("augment_spikes"), cfg.detect.get("augment_stimulus")
    if aug_s or aug_t:
        if not (aug_s and aug_t):
            raise ConfigError("detect.augment_spikes and detect.augment_stimulus: give both or neither")
        extra = load_trials(cfg.resolve(aug_s), cfg.resolve(aug_t), cfg.bin_width)
        large_trials = trials.concat(extra)
    elif any(t.role == TEST for t in trials):
        large_trials = trials
    if large_trials is not None:
        d_large = build_design(large_trials, cfg.p, cfg.q, d_small.band_edges, role=None)
        classify_perfect(sep, d_small, d_large)
    out = Path(cfg.out)
    report.write_json(out / "separation.json", sep)
    rows = []
    for j in sep.perfect_columns:
        label = sep.classification.get(j)
        rows.append({"index": j, "name": d_small.names[j], "kind": "column",
                     "classification": label.value if label else "unclassified"})
    for c, combo in enumerate(sep.combos):
        label = sep.combo_classification[c] if sep.combo_classification else None
        rows.append({"index": ";".join(map(str, combo.columns)),
                     "name": "+".join(f"{w:.6g}*{d_small.names[j]}" for j, w in zip(combo.columns, combo.weights)),
                     "kind": "combination",
                     "classification": label.value if label else "unclassified"})
    report.write_csv(out / "separation.csv", rows, ["index", "name", "kind", "classification"])
    print(f"{len(sep.perfect_columns)} perfect column(s), {len(sep.combos)} generated combination(s), "
          f"{sep.predicted_rows.size} perfectly predicted row(s) of {d_small.n}")
    for r in rows:
        print(f"  {r['name']}: {r['classification']}")
    return {"report": sep}


def cmd_simulate(cfg: RunConfig) -> dict:
    spec, n_test = simulation_spec(cfg)
    trials = simulate_spike_train(spec)
    ids = trials.ids
    test_ids = ids[len(ids) - n_test:] if n_test else []
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trials(trials, out / "spikes.csv", out / "stimulus.csv")
    fit_config = {
        "data": {"spikes": "spikes.csv", "stimulus": "stimulus.csv",
                 "bin_width": spec.bin_width, "test_trials": test_ids},
        "design": {"p": spec.p, "q": spec.q},
        "strategies": [s.to_dict() for s in _strategies(cfg)],
        "seed": cfg.seed,
        "out": "results",
    }
    if cfg.band_edges is not None:
        fit_config["design"]["band_edges"] = cfg.band_edges
    report.write_json(out / "config.json", fit_config)
    report.write_json(out / "truth.json", {"beta": spec.beta, "p": spec.p, "q": spec.q,
                                            "band_edges": spec.edges(), "seed": spec.seed})
    print(f"simulated {len(trials)} trial(s), {trials.total_spikes} spikes -> {out}")
    return {"trials": trials}


def cmd_gof(cfg: RunConfig) -> dict:
    trials = _load(cfg)
    d_train, d_test = _designs(cfg, trials)
    sep = detect_separation(d_train)
    exact = bool(cfg.gof.get("ks_exact", False))
    out = Path(cfg.out)
    summary = {}
    for s in _strategies(cfg):
        fit = _staged(s.name, "fit", fit_strategy, s, d_train, sep)
        g = _staged(s.name, "gof", gof.gof_report, fit, d_train, d_test)
        splits = {"train": trials.training()}
        if d_test is not None:
            splits["test"] = trials.held_out()
        ks = {}
        for split, ts in splits.items():
            u = gof.rescale_trials(fit, ts, cfg.p, cfg.q, d_train.band_edges)
            if u.size == 0:
                ks[split] = None
                continue
            res = gof.ks_analysis(u, exact=exact)
            ks[split] = res
            mq, emp = gof.ks_curve(u)
            report.write_text(
                out / s.name / f"ks_{split}.svg",
                report.ks_svg(mq, emp, res.bound, f"{s.label} ({split}): KS {res.statistic:.3f}"),
            )
            report.write_csv(out / s.name / f"rescaled_{split}.csv",
                             [{"u": v} for v in u], ["u"])
        corr = _staged(s.name, "correlation", gof.param_correlation, fit)
        report.write_matrix_csv(out / s.name / "correlation.csv", d_train.names, corr)
        doc = g.numeric_dict()
        doc["ks"] = {k: (None if v is None else v.to_dict()) for k, v in ks.items()}
        report.write_json(out / s.name / "gof.json", doc)
        summary[s.name] = doc
        line = ", ".join(
            f"{k} KS={v.statistic:.3f} ({'pass' if v.passed else 'fail'})" for k, v in ks.items() if v
        )
        print(f"{s.name:<16} R={gof.describe_R(g.R)} {line}")
    report.write_json(out / "gof_summary.json", summary)
    return summary


def cmd_bootstrap(cfg: RunConfig) -> dict:
    if not cfg.bootstrap:
        raise ConfigError("bootstrap: section required")
    trials = _load(cfg)
    s = cfg.bootstrap["strategy"]
    summary = _staged(
        s.name, "bootstrap", bootstrap_ci, s, trials.training(), cfg.p, cfg.q,
        B=cfg.bootstrap["B"], seed=cfg.seed, band_edges=cfg.band_edges,
        threads=cfg.worker_count(), level=cfg.bootstrap["level"],
    )
    out = Path(cfg.out)
    report.write_json(out / "bootstrap.json", {"strategy": s.to_dict(), **summary.to_dict()})
    report.write_csv(out / "bootstrap.csv", summary.to_rows(),
                     ["name", "n_finite", "lower", "upper", "divergence_fraction"])
    mid = np.where(summary.defined(), 0.5 * (summary.lower + summary.upper), np.nan)
    report.write_text(out / "bootstrap.svg", report.params_svg(
        summary.names, mid, summary.lower, summary.upper,
        f"{s.label}: bootstrap {int(100 * summary.level)}% intervals of exp(beta)"))
    undefined = [n for n, ok in zip(summary.names, summary.defined()) if not ok]
    print(f"{summary.n_replicates} replicates ({summary.n_failed} failed); "
          f"no interval for {len(undefined)} always-divergent coefficient(s)")
    return {"summary": summary}


def cmd_cv(cfg: RunConfig) -> dict:
    if not cfg.cv:
        raise ConfigError("cv: section required")
    trials = _load(cfg)
    s = cfg.cv["strategy"]
    grid = cfg.cv.get("grid") or list(DEFAULT_GRIDS.get(s.name, ()))
    if not grid:
        raise ConfigError(f"cv.grid: required for strategy {s.name!r} (no default grid)")
    best, table = _staged(
        s.name, "cv", select_hyperparameter, trials, s, grid, cfg.p, cfg.q,
        k=cfg.cv.get("folds", "loo"), seed=cfg.seed, band_edges=cfg.band_edges,
        threads=cfg.worker_count(),
    )
    out = Path(cfg.out)
    report.write_json(out / "cv.json", {"strategy": s.to_dict(), "parameter": s.hyperparameter,
                                        "selected": best, "table": table})
    rows = [{"value": r["value"], "mean_R_CV": r["mean_R_CV"],
             "folds": ";".join(map(str, r["folds"])),
             "fold_R_CV": ";".join(str(report.to_jsonable(v)) for v in r["fold_R_CV"])} for r in table]
    report.write_csv(out / "cv.csv", rows, ["value", "mean_R_CV", "folds", "fold_R_CV"])
    for r in table:
        mark = "  <- selected" if r["value"] == best else ""
        print(f"{s.hyperparameter}={r['value']!s:<10} mean R_CV={gof.describe_R(r['mean_R_CV'])}{mark}")
    return {"best": best, "table": table}


COMMANDS = {
    "fit": (cmd_fit, "fit every configured strategy and write the comparison table"),
    "detect": (cmd_detect, "report perfect predictors and classify them"),
    "simulate": (cmd_simulate, "simulate spike trains from the simulation section"),
    "gof": (cmd_gof, "time-rescaling KS analysis and parameter correlations"),
    "bootstrap": (cmd_bootstrap, "trial-level bootstrap intervals"),
    "cv": (cmd_cv, "cross-validated hyperparameter selection"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sepglm",
        description="Point-process GLMs for spike trains with perfect predictors.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for bootstrap and CV (default: all cores)")
        p.add_argument("--out", default=None, help="output directory (overrides config 'out')")
        p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed: must be >= 0")
            cfg.seed = args.seed
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads: must be >= 1")
            cfg.threads = args.threads
        if args.out is not None:
            cfg.out = Path(args.out)
        COMMANDS[args.command][0](cfg)
    except ConfigError as exc:
        print(f"sepglm: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"sepglm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"sepglm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
