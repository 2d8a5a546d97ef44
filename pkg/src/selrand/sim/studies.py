"""Study drivers: rejection rates, coverage, hold-out smoothing, placebo/power, window sizes.

Each driver returns a StudyReport holding one long-format row per
(replication, method, tau) plus an aggregated summary. Rows of failed
computations are kept and flagged so failure rates stay visible.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from selrand.config import StudyConfig
from selrand.errors import NoBracket, SelrandError, Undefined
from selrand.inference.confidence import (
    bisect_lower_bound,
    count_crossings,
    hl_estimate,
    tau_grid,
)
from selrand.inference.pvalues import (
    ExactMethod,
    PValueFunction,
    RwmMethod,
    make_pvalue_fn,
)
from selrand.io.csv_ingest import read_binary_dataset
from selrand.samplers.streams import Seed, child
from selrand.selection.conditioning import observed_selections
from selrand.sim.generators import (
    enrichment_spec,
    gen_enrichment_trial,
    relative_risk_spec,
    sprint_surrogate,
    subsample_two_stage,
)
from selrand.sim.runner import run_replications, timed
from selrand.trial.record import TrialRecord
from selrand.trial.spec import TrialSpec

logger = logging.getLogger(__name__)

METHODS = ("naive", "split", "srt_rejection", "srt_rwm", "srt_exact")
CDF_LEVELS = (0.01, 0.05, 0.1, 0.2)


@dataclass
class StudyReport:
    name: str
    rows: pd.DataFrame
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"study": self.name, "replications": self._replications(), **self.summary}

    def _replications(self) -> int:
        if self.rows.empty or "replication" not in self.rows:
            return 0
        return int(self.rows["replication"].nunique())


def method_pvalue_fn(
    spec: TrialSpec,
    rec: TrialRecord,
    method: str,
    cfg: StudyConfig,
    *,
    window: int | None = None,
) -> PValueFunction:
    """p(tau, seed) for one of the study methods on ``rec``."""
    settings = cfg.sampler
    m = settings.num_samples
    if method == "naive":
        return make_pvalue_fn(spec, rec, method="naive", num_samples=m)
    if method == "split":
        return make_pvalue_fn(spec, rec, method="split", num_samples=m)
    if method == "srt_rejection":
        sampler = settings.build("rejection")
    elif method == "srt_rwm":
        sampler = RwmMethod(settings.rwm_config(window))
    elif method == "srt_exact":
        sampler = ExactMethod(cap=settings.exact_cap)
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    return make_pvalue_fn(spec, rec, method="selective", sampler=sampler)


def _tau0(spec: TrialSpec, rec: TrialRecord) -> float:
    """Common true effect of the selected groups, NaN when they differ."""
    tau_true = rec.metadata.get("tau_true", {})
    groups = spec.selection_rule.selected_groups(rec.selections[-1])
    values = {float(tau_true.get(g, 0.0)) for g in groups}
    return values.pop() if len(values) == 1 else math.nan


def _pvalue_row(
    fn: PValueFunction, tau: float, seed: Seed, cfg: StudyConfig, base: dict
) -> dict:
    row = dict(base, tau=float(tau))
    try:
        result, seconds = timed(lambda: fn(float(tau), seed))
    except SelrandError as exc:
        logger.warning(
            "%s at tau=%g failed in replication %s: %s",
            base.get("method"),
            tau,
            base.get("replication"),
            exc.code,
        )
        return dict(row, pvalue=math.nan, reject=None, failed=True, error=exc.code)
    row.update(
        pvalue=result.estimate,
        reject=bool(result.estimate <= cfg.alpha),
        acceptance_rate=result.diagnostics.get("acceptance_rate"),
        msejd=result.diagnostics.get("msejd"),
        failed=False,
        error=None,
    )
    if cfg.timing_enabled:
        row["seconds"] = seconds
    return row


def _flag(rows: pd.DataFrame, column: str) -> pd.Series:
    """Boolean view of an optional flag column; missing values count as False."""
    if column not in rows:
        return pd.Series(False, index=rows.index)
    return rows[column].astype("boolean").fillna(False).astype(bool)


def _rates(rows: pd.DataFrame, by: list[str], column: str = "reject") -> list[dict]:
    ok = rows[~_flag(rows, "failed")].copy()
    if ok.empty:
        return []
    ok[column] = ok[column].astype(float)
    grouped = ok.groupby(by, sort=True)[column]
    table = grouped.agg(["mean", "count"]).reset_index()
    table["se"] = np.sqrt(table["mean"] * (1 - table["mean"]) / table["count"])
    table = table.rename(columns={"mean": "rate", "count": "n"})
    return table.to_dict(orient="records")


def run_rejection_study(cfg: StudyConfig) -> StudyReport:
    """Rejection probabilities of every method over the tau grid, overall and per selection."""
    design = cfg.enrichment
    spec = enrichment_spec(design.n1, design.n2, holdout=design.holdout, quantiles=design.quantiles)
    taus = tau_grid(*cfg.tau_grid)

    def replicate(index: int, stream: np.random.SeedSequence) -> list[dict]:
        rec = gen_enrichment_trial(spec, design.tau_true, child(stream, "data"))
        rows = []
        for method in cfg.methods:
            fn = method_pvalue_fn(spec, rec, method, cfg)
            seed = child(stream, "test", method)
            base = {"replication": index, "selection": rec.selections[-1], "method": method}
            rows.extend(_pvalue_row(fn, tau, seed, cfg, base) for tau in taus)
        return rows

    rows = pd.DataFrame(
        run_replications(replicate, cfg.replications, cfg.seed, threads=cfg.threads)
    )
    summary = {
        "alpha": cfg.alpha,
        "rejection": _rates(rows, ["method", "tau"]),
        "rejection_by_selection": _rates(rows, ["method", "selection", "tau"]),
        "selection_counts": _selection_counts(rows),
    }
    if cfg.timing_enabled and "seconds" in rows:
        summary["seconds"] = (
            rows.groupby(["method", "selection"])["seconds"].mean().reset_index()
        ).to_dict(orient="records")
    return StudyReport("rejection", rows, summary)


def _selection_counts(rows: pd.DataFrame) -> dict[str, int]:
    if rows.empty or "selection" not in rows:
        return {}
    per_rep = rows.dropna(subset=["selection"]).drop_duplicates("replication")
    return {str(k): int(v) for k, v in per_rep["selection"].value_counts().sort_index().items()}


def run_coverage_study(cfg: StudyConfig) -> StudyReport:
    """One-sided lower confidence bounds by bisection and their coverage of the true effect."""
    design = cfg.enrichment
    spec = enrichment_spec(design.n1, design.n2, holdout=design.holdout, quantiles=design.quantiles)
    lo, hi = cfg.coverage.bracket

    def replicate(index: int, stream: np.random.SeedSequence) -> list[dict]:
        rec = gen_enrichment_trial(spec, design.tau_true, child(stream, "data"))
        tau0 = _tau0(spec, rec)
        rows = []
        for method in cfg.methods:
            fn = method_pvalue_fn(spec, rec, method, cfg)
            seed = child(stream, "bisect", method)
            row = {"replication": index, "selection": rec.selections[-1], "method": method}
            try:
                lower = bisect_lower_bound(
                    lambda tau, fn=fn, seed=seed: fn(tau, seed).estimate,
                    cfg.alpha,
                    (lo, hi),
                    cfg.coverage.tol,
                )
                clamped = None
            except NoBracket as exc:
                # nothing rejected at the left end, or everything rejected
                lower = lo if exc.p_lo > cfg.alpha else hi
                clamped = "lo" if exc.p_lo > cfg.alpha else "hi"
            except SelrandError as exc:
                logger.warning("%s bound failed in replication %d: %s", method, index, exc.code)
                rows.append(dict(row, lower=math.nan, covered=None, failed=True, error=exc.code))
                continue
            covered = None if math.isnan(tau0) else bool(tau0 >= lower)
            rows.append(
                dict(row, lower=lower, tau0=tau0, covered=covered, clamped=clamped, failed=False)
            )
        return rows

    rows = pd.DataFrame(
        run_replications(replicate, cfg.replications, cfg.seed, threads=cfg.threads)
    )
    scored = rows.dropna(subset=["covered"]) if "covered" in rows else rows.iloc[0:0]
    summary = {
        "alpha": cfg.alpha,
        "coverage": _rates(scored, ["method"], "covered"),
        "coverage_by_selection": _rates(scored, ["method", "selection"], "covered"),
        "mean_lower": _mean_lower(rows),
    }
    return StudyReport("coverage", rows, summary)


def _mean_lower(rows: pd.DataFrame) -> list[dict]:
    ok = rows[~_flag(rows, "failed")]
    if ok.empty or "lower" not in ok:
        return []
    table = ok.groupby("method")["lower"].agg(["mean", "std", "count"]).reset_index()
    table["se"] = table["std"] / np.sqrt(table["count"])
    return table.drop(columns="std").rename(columns={"count": "n"}).to_dict(orient="records")


def run_holdout_study(cfg: StudyConfig) -> StudyReport:
    """Exact p-curves with and without hold-out units, plus the split curve, on matched data.

    A dataset is used only when both selection rules pick the target
    hypothesis. The designs share stage 1, so one simulated trial serves both.
    """
    design = cfg.holdout
    held = enrichment_spec(design.n1, design.n2, holdout=True)
    joint = enrichment_spec(design.n1, design.n2, holdout=False)
    taus = tau_grid(*design.grid)
    exact = ExactMethod(cap=cfg.sampler.exact_cap)

    def replicate(index: int, stream: np.random.SeedSequence) -> list[dict]:
        rec_held = gen_enrichment_trial(held, design.tau_true, child(stream, "data"))
        rec_joint = _reselect(joint, rec_held)
        matched = rec_held.selections[-1] == design.target == rec_joint.selections[-1]
        if not matched:
            return [{"replication": index, "curve": None, "matched": False}]
        curves = {
            "joint": make_pvalue_fn(joint, rec_joint, method="selective", sampler=exact),
            "holdout": make_pvalue_fn(held, rec_held, method="selective", sampler=exact),
            "split": make_pvalue_fn(held, rec_held, method="split", sampler=exact),
        }
        rows = []
        for name, fn in curves.items():
            pvalues = [fn(float(t), child(stream, "curve")).estimate for t in taus]
            rows.extend(
                {"replication": index, "curve": name, "matched": True, "tau": float(t), "pvalue": p}
                for t, p in zip(taus, pvalues)
            )
        return rows

    rows = pd.DataFrame(
        run_replications(replicate, design.datasets, cfg.seed, threads=cfg.threads, label="dataset")
    )
    summary = _holdout_summary(rows)
    return StudyReport("holdout", rows, summary)


def _reselect(spec: TrialSpec, rec: TrialRecord) -> TrialRecord:
    return rec.with_selections(observed_selections(spec, rec))


def _holdout_summary(rows: pd.DataFrame) -> dict:
    curves = rows[_flag(rows, "matched") & ~_flag(rows, "failed")]
    per_dataset = []
    for dataset, block in curves.groupby("replication", sort=True):
        entry: dict = {"dataset": int(dataset)}
        for name, curve in block.groupby("curve", sort=True):
            curve = curve.sort_values("tau")
            entry[f"{name}_crossings"] = count_crossings(curve["pvalue"].to_numpy())
            try:
                entry[f"{name}_hl"] = hl_estimate(curve["tau"], curve["pvalue"])
            except Undefined:
                entry[f"{name}_hl"] = None
        per_dataset.append(entry)
    n = len(per_dataset)
    smoother = sum(d["holdout_crossings"] <= d["joint_crossings"] for d in per_dataset)
    split_fewest = sum(
        d["split_crossings"] <= min(d["holdout_crossings"], d["joint_crossings"])
        for d in per_dataset
    )
    return {
        "matched_datasets": n,
        "holdout_not_rougher_fraction": smoother / n if n else None,
        "split_fewest_fraction": split_fewest / n if n else None,
        "datasets": per_dataset,
    }


def _load_dataset(cfg: StudyConfig) -> pd.DataFrame:
    path = cfg.real_data.dataset
    if path:
        return read_binary_dataset(path)
    logger.info("no dataset configured; using the synthetic surrogate")
    return sprint_surrogate(child(cfg.seed, "dataset"))


def _real_data_study(
    cfg: StudyConfig, name: str, dataset: pd.DataFrame, placebo_p: float | None
) -> StudyReport:
    design = cfg.real_data
    groups = sorted(dataset["group"].astype(str).unique(), key=_age_key)
    spec = relative_risk_spec(groups, design.n2, p=design.p)
    methods = ("naive", "split", "srt_rejection")
    needed = cfg.replications
    max_draws = design.max_draw_factor * needed

    def replicate(index: int, stream: np.random.SeedSequence) -> list[dict]:
        rec = subsample_two_stage(
            dataset, spec, design.n1, design.n2, child(stream, "data"), placebo_p=placebo_p
        )
        if rec.selections[-1] != design.target_group:
            return [{"replication": index, "selection": rec.selections[-1], "kept": False}]
        rows = []
        for method in methods:
            fn = method_pvalue_fn(spec, rec, method, cfg)
            base = {
                "replication": index,
                "selection": rec.selections[-1],
                "kept": True,
                "method": method,
            }
            rows.append(_pvalue_row(fn, 0.0, child(stream, "test", method), cfg, base))
        return rows

    collected: list[dict] = []
    kept = 0
    start = 0
    while kept < needed and start < max_draws:
        batch = min(needed, max_draws - start)
        collected.extend(
            run_replications(
                replicate, batch, cfg.seed, threads=cfg.threads, label="draw", start=start
            )
        )
        kept = len({r["replication"] for r in collected if r.get("kept")})
        start += batch
    if kept < needed:
        logger.warning("only %d of %d target trials after %d draws", kept, needed, start)

    rows = pd.DataFrame(collected)
    selected = sorted({r["replication"] for r in collected if r.get("kept")})
    target_draws = selected[:needed]
    rows = rows[rows["replication"].isin(target_draws) | ~_flag(rows, "kept")]
    tested = rows[_flag(rows, "kept")]
    summary = {
        "draws": start,
        "target_trials": len(target_draws),
        "selection_rate": len(selected) / max(start, 1),
        "cdf": _cdf_table(tested),
    }
    return StudyReport(name, rows.reset_index(drop=True), summary)


def _age_key(label: str) -> tuple[int, str]:
    digits = "".join(ch if ch.isdigit() else " " for ch in label).split()
    return (int(digits[0]) if digits else 0, label)


def _cdf_table(rows: pd.DataFrame) -> list[dict]:
    ok = rows[~_flag(rows, "failed")]
    out = []
    if "method" not in ok:
        return out
    for method, block in ok.groupby("method", sort=True):
        p = block["pvalue"].to_numpy(dtype=float)
        for level in CDF_LEVELS:
            f = float(np.mean(p <= level))
            out.append(
                {
                    "method": method,
                    "alpha": level,
                    "cdf": f,
                    "se": math.sqrt(f * (1 - f) / len(p)),
                    "n": len(p),
                }
            )
    return out


def run_placebo_study(cfg: StudyConfig, dataset: pd.DataFrame | None = None) -> StudyReport:
    """Type-I error on control units with fabricated Bernoulli treatment labels."""
    dataset = _load_dataset(cfg) if dataset is None else dataset
    controls = dataset[dataset["treatment"] == 0].reset_index(drop=True)
    return _real_data_study(cfg, "placebo", controls, placebo_p=cfg.real_data.p)


def run_power_study(cfg: StudyConfig, dataset: pd.DataFrame | None = None) -> StudyReport:
    """Rejection rates at tau = 0 on subsamples that keep the recorded treatments."""
    dataset = _load_dataset(cfg) if dataset is None else dataset
    return _real_data_study(cfg, "power", dataset, placebo_p=None)


def run_window_study(cfg: StudyConfig) -> StudyReport:
    """RWM rejection rates, chain diagnostics and timing across window sizes."""
    design = cfg.enrichment
    spec = enrichment_spec(design.n1, design.n2, holdout=design.holdout, quantiles=design.quantiles)
    taus = tau_grid(*cfg.tau_grid)

    def replicate(index: int, stream: np.random.SeedSequence) -> list[dict]:
        rec = gen_enrichment_trial(spec, design.tau_true, child(stream, "data"))
        rows = []
        for h in cfg.windows:
            fn = method_pvalue_fn(spec, rec, "srt_rwm", cfg, window=h)
            seed = child(stream, "window", h)
            for tau in taus:
                base = {
                    "replication": index,
                    "selection": rec.selections[-1],
                    "method": "srt_rwm",
                    "window": h,
                }
                rows.append(_pvalue_row(fn, tau, seed, cfg, base))
        return rows

    rows = pd.DataFrame(
        run_replications(replicate, cfg.replications, cfg.seed, threads=cfg.threads)
    )
    summary: dict = {
        "alpha": cfg.alpha,
        "rejection": _rates(rows, ["window", "tau"]),
    }
    ok = rows[~_flag(rows, "failed")]
    if not ok.empty:
        diag = ok.groupby("window")[["acceptance_rate", "msejd"]].mean().reset_index()
        summary["chain"] = diag.to_dict(orient="records")
        if cfg.timing_enabled and "seconds" in ok:
            summary["seconds"] = ok.groupby("window")["seconds"].mean().reset_index().to_dict(
                orient="records"
            )
    return StudyReport("windows", rows, summary)


STUDIES: dict[str, Callable[[StudyConfig], StudyReport]] = {
    "rejection": run_rejection_study,
    "coverage": run_coverage_study,
    "holdout": run_holdout_study,
    "placebo": run_placebo_study,
    "power": run_power_study,
    "windows": run_window_study,
}
