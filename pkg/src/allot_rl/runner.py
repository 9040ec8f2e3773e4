"""Command implementations behind the ``allot-rl`` entry point.

Every output file is written atomically and contains no timestamps, so the
same inputs, config and seed give byte-identical files.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import logging
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import checkpoint as ckpt
from .checkpoint import atomic_write_text
from .config import RunConfig
from .errors import AllotError, ConfigError, ValidationError
from .marketdata import ReturnPanel, load_prices, prepare_panel, require_columns
from .metrics import METRIC_NAMES, PerformanceReport
from .pipeline import ExperimentSettings, PhaseData, evaluate, phase_data, run_phase
from .ppo.trainer import Trace
from .store import read_store, sha256_file, write_store
from .synth import bull_bear_config, generate_regime_market

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
HISTORY_COLUMNS = (
    "episode",
    "source",
    "accumulated_return",
    "max_drawdown",
    "mean_reward",
    "tc_rate",
    "global_step",
    "valid_annual_return",
    "valid_max_drawdown",
    "valid_score",
)
DEFAULT_INDEX_COLUMNS = ("hy_spread", "vix", "move")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=True) + "\n"


# -- ingest -----------------------------------------------------------------


def build_panel(cfg: RunConfig) -> tuple[ReturnPanel, dict]:
    data = cfg.section("data")
    if data["prices"] is None:
        sm = cfg.section("synthetic_market")
        regime = bull_bear_config(n_steps=int(sm["n_steps"]), seed=int(sm["seed"]), persistence=float(sm["persistence"]))
        regime = dataclasses.replace(regime, start_date=str(sm["start_date"]))
        return generate_regime_market(regime), {"synthetic_market": dict(sm)}
    prices_path = cfg.resolve(data["prices"])
    prices = load_prices(prices_path)
    weights = cfg.strategy_weights()
    needed = sorted({t for table in weights.values() for t in table})
    require_columns(prices, needed, f"prices ({prices_path})")
    sources = {"prices": {"file": prices_path.name, "sha256": sha256_file(prices_path)}}
    index_prices = None
    if data["indexes"] is not None:
        index_path = cfg.resolve(data["indexes"])
        index_prices = load_prices(index_path)
        columns = list(data["index_columns"] or DEFAULT_INDEX_COLUMNS)
        require_columns(index_prices, columns, f"index ({index_path})")
        keep = [index_prices.tickers.index(c) for c in columns]
        index_prices = type(index_prices)(index_prices.dates, tuple(columns), index_prices.values[:, keep])
        sources["indexes"] = {"file": index_path.name, "sha256": sha256_file(index_path)}
    panel = prepare_panel(prices, index_prices, weights, data["rebalance"])
    sources["strategies"] = {k: dict(v) for k, v in weights.items()}
    sources["rebalance"] = data["rebalance"]
    return panel, sources


def cmd_ingest(cfg: RunConfig, out: Path | None = None) -> Path:
    target = Path(out) if out is not None else cfg.store
    panel, sources = build_panel(cfg)
    if panel.asset_returns.shape[1] != 3 or panel.index_returns.shape[1] != 3:
        raise ValidationError(
            f"need 3 strategies and 3 indexes, got {panel.asset_returns.shape[1]} and {panel.index_returns.shape[1]}"
        )
    frame = write_store(target, panel, cfg.feature_spec(), sources)
    log.info("wrote store %s: %d daily rows, %d feature rows", target, len(panel), len(frame))
    return target


def load_panel(cfg: RunConfig) -> ReturnPanel:
    panel, meta = read_store(cfg.store)
    if meta["features"] != cfg.feature_settings():
        raise ConfigError(
            f"store {cfg.store} was built with features {meta['features']}, config asks for "
            f"{cfg.feature_settings()}; re-run ingest"
        )
    return panel


# -- train ------------------------------------------------------------------


def phase_seed(seed: int, phase: int) -> int:
    return int(np.random.SeedSequence([seed, phase]).generate_state(1)[0])


def history_csv(history: list[dict]) -> str:
    return _csv(HISTORY_COLUMNS, ([h.get(c) for c in HISTORY_COLUMNS] for h in history))


def split_metrics(params, data: PhaseData, settings: ExperimentSettings) -> dict:
    out = {}
    for split in SPLITS:
        frame = data.split(split)
        policy, _ = evaluate(params, frame, settings, diagnostics=False)
        bench, _ = evaluate(None, frame, settings, diagnostics=False)
        out[split] = {"policy": policy.as_dict(), "benchmark": bench.as_dict()}
    return out


def train_seed(cfg: RunConfig, panel: ReturnPanel, seed: int, seed_dir: Path) -> dict:
    settings = cfg.settings()
    plan = cfg.phase_plan()
    sig = cfg.signature_hash()
    atomic_write_text(seed_dir / "config.yaml", cfg.dump())
    init = None
    summary = {
        "seed": seed,
        "reward_kind": settings.reward_kind,
        "phases": cfg.run_phases,
        "signature_hash": sig,
        "best_episode": {},
        "skipped_reward_steps": {},
    }
    for index, phase in enumerate(cfg.run_phases):
        pdir = seed_dir / f"phase_{phase}"
        try:
            data = phase_data(panel, settings.features, plan, phase)
            result = run_phase(data, settings, index, phase_seed(seed, phase), init)
            meta = {"seed": seed, "phase": phase, "best_episode": result.best_episode}
            ckpt.save(pdir / "checkpoint_best.json", result.best_params, sig, meta)
            ckpt.save(pdir / "checkpoint_final.json", result.final_params, sig, {**meta, "which": "final"})
            atomic_write_text(pdir / "history.csv", history_csv(result.history))
            atomic_write_text(pdir / "metrics.json", _json(split_metrics(result.best_params, data, settings)))
        except AllotError as exc:
            record = {"phase": phase, "seed": seed, "error": type(exc).__name__, "message": str(exc)}
            atomic_write_text(pdir / "error.json", _json(record))
            raise
        summary["best_episode"][str(phase)] = result.best_episode
        summary["skipped_reward_steps"][str(phase)] = result.skipped_reward_steps
        init = result.best_params
    atomic_write_text(seed_dir / "run.json", _json(summary))
    return summary


def cmd_train(cfg: RunConfig, out: Path | None = None) -> list[Path]:
    out = Path(out) if out is not None else cfg.out
    panel = load_panel(cfg)
    dirs = []
    for seed in cfg.seeds:
        seed_dir = out / f"seed_{seed}"
        log.info("training seed %d into %s", seed, seed_dir)
        train_seed(cfg, panel, seed, seed_dir)
        dirs.append(seed_dir)
    return dirs


# -- evaluate ---------------------------------------------------------------


def trace_csv(trace: Trace) -> str:
    header = ["date", "w_1", "w_2", "w_3", "w_star_1", "w_star_2", "w_star_3", "net_return", "drawdown", "reward", "cost"]
    rows = []
    for i, d in enumerate(trace.dates):
        ws = ["" if math.isnan(x) else x for x in trace.w_star[i]]
        rows.append(
            [str(np.datetime64(d, "D")), *trace.weights[i], *ws, trace.net_returns[i], trace.drawdowns[i], trace.rewards[i], trace.costs[i]]
        )
    return _csv(header, rows)


def cmd_evaluate(
    cfg: RunConfig, checkpoint: str, split: str, phase: int, out: Path, force: bool = False
) -> PerformanceReport:
    if split not in SPLITS:
        raise ValidationError(f"split must be one of {SPLITS}, got {split!r}")
    if checkpoint == ckpt.BENCHMARK:
        params = None
    else:
        params, doc = ckpt.load(checkpoint)
        ckpt.check_signature(doc, cfg.signature_hash(), force)
    panel = load_panel(cfg)
    settings = cfg.settings()
    data = phase_data(panel, settings.features, cfg.phase_plan(), phase)
    report, trace = evaluate(params, data.split(split), settings, diagnostics=True)
    out = Path(out)
    body = {"checkpoint": "benchmark" if params is None else Path(checkpoint).name, "phase": phase, "split": split}
    body["metrics"] = report.as_dict()
    atomic_write_text(out / "metrics.json", _json(body))
    atomic_write_text(out / "trace.csv", trace_csv(trace))
    return report


# -- ablate -----------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class AblationCell:
    tc_schedule: bool
    bootstrap: bool
    reward: str

    @property
    def name(self) -> str:
        tc = "tc" if self.tc_schedule else "notc"
        bb = "bb" if self.bootstrap else "nobb"
        return f"{tc}_{bb}_{self.reward}"


def ablation_cells(cfg: RunConfig) -> list[AblationCell]:
    abl = cfg.section("ablation")
    return [
        AblationCell(bool(tc), bool(bb), str(kind))
        for tc, bb, kind in itertools.product(abl["tc_schedule"], abl["bootstrap"], abl["rewards"])
    ]


def curve_stats(curves: list[np.ndarray]) -> tuple[np.ndarray, ...]:
    """Mean, sample std and standard error per episode over runs of equal length."""
    arr = np.vstack(curves)
    n = arr.shape[0]
    mean = arr.mean(axis=0)
    std = arr.std(axis=0, ddof=1) if n > 1 else np.zeros(arr.shape[1])
    return mean, std, std / math.sqrt(n)


def cmd_ablate(cfg: RunConfig, out: Path | None = None, phase: int | None = None) -> Path:
    out = Path(out) if out is not None else cfg.out / "ablation"
    panel = load_panel(cfg)
    abl = cfg.section("ablation")
    phase = int(phase if phase is not None else abl["phase"])
    base = cfg.settings()
    data = phase_data(panel, base.features, cfg.phase_plan(), phase)
    runs = int(abl["runs"])
    seed0 = cfg.seeds[0]
    table = []
    failures = []
    for cell in ablation_cells(cfg):
        settings = dataclasses.replace(
            base,
            tc_schedule=cell.tc_schedule,
            bootstrap=dataclasses.replace(base.bootstrap, enabled=cell.bootstrap),
            reward_kind=cell.reward,
            reward_params=base.reward_params if cell.reward == base.reward_kind else {},
        )
        curves, finals = [], []
        for r in range(runs):
            try:
                result = run_phase(data, settings, 0, phase_seed(seed0 + r, phase))
                curves.append(np.array([h["accumulated_return"] for h in result.history]))
                finals.append(split_metrics(result.best_params, data, settings))
            except AllotError as exc:
                failures.append([cell.name, seed0 + r, type(exc).__name__, str(exc)])
                log.warning("ablation cell %s run %d failed: %s", cell.name, r, exc)
        if curves:
            mean, std, se = curve_stats(curves)
            rows = [[i, mean[i], std[i], se[i], len(curves)] for i in range(len(mean))]
            atomic_write_text(out / "curves" / f"{cell.name}.csv", _csv(["episode", "mean", "std", "stderr", "n_runs"], rows))
        for split in SPLITS:
            for metric in METRIC_NAMES:
                vals = np.array([f[split]["policy"][metric] for f in finals])
                if len(vals):
                    std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
                    table.append([cell.name, cell.tc_schedule, cell.bootstrap, cell.reward, split, metric, float(vals.mean()), std, len(vals)])
    atomic_write_text(
        out / "summary.csv",
        _csv(["cell", "tc_schedule", "bootstrap", "reward", "split", "metric", "mean", "std", "n_runs"], table),
    )
    atomic_write_text(out / "failures.csv", _csv(["cell", "seed", "error", "message"], failures))
    return out


# -- report -----------------------------------------------------------------


def find_runs(paths: Sequence[Path]) -> list[Path]:
    found = []
    for p in paths:
        p = Path(p)
        if (p / "run.json").exists():
            found.append(p)
            continue
        subs = sorted(d for d in p.glob("seed_*") if (d / "run.json").exists()) if p.is_dir() else []
        if not subs:
            log.warning("no completed run found in %s", p)
        found.extend(subs)
    return found


def cmd_report(run_dirs: Sequence[Path], out: Path) -> tuple[Path, Path]:
    if not run_dirs:
        raise ValidationError("report needs at least one run directory")
    runs = find_runs(run_dirs)
    # values[(row, phase, split, metric)] -> list of floats
    values: dict[tuple, list[float]] = {}
    phases: set[int] = set()
    per_run = []
    for run in runs:
        summary = json.loads((run / "run.json").read_text())
        kind = summary["reward_kind"]
        seed = summary["seed"]
        for phase in summary["phases"]:
            path = run / f"phase_{phase}" / "metrics.json"
            if not path.exists():
                log.warning("%s is missing; skipped", path)
                continue
            phases.add(int(phase))
            metrics = json.loads(path.read_text())
            for split in SPLITS:
                for row, src in (("benchmark", "benchmark"), (kind, "policy")):
                    for metric in METRIC_NAMES:
                        v = metrics[split][src][metric]
                        values.setdefault((row, int(phase), split, metric), []).append(v)
                        per_run.append([int(phase), split, row, seed, metric, v, str(run)])
    kinds = sorted({k[0] for k in values} - {"benchmark"})
    rows_order = ["benchmark", *kinds]
    columns = [(p, s) for p in sorted(phases) for s in SPLITS]
    long_rows = []
    for metric in METRIC_NAMES:
        for row in rows_order:
            for phase, split in columns:
                vals = values.get((row, phase, split, metric))
                if vals is None:
                    continue
                # the benchmark is identical across runs of the same data; keep one copy
                v = vals[0] if row == "benchmark" else float(np.mean(vals))
                long_rows.append([metric, row, phase, split, v, 1 if row == "benchmark" else len(vals)])
    out = Path(out)
    csv_path = out / "report.csv"
    txt_path = out / "report.txt"
    atomic_write_text(csv_path, _csv(["metric", "policy", "phase", "split", "value", "n_runs"], long_rows))
    per_run.sort(key=lambda r: (r[0], SPLITS.index(r[1]), rows_order.index(r[2]), r[3], METRIC_NAMES.index(r[4]), r[6]))
    atomic_write_text(
        out / "report_runs.csv", _csv(["phase", "split", "reward_kind", "seed", "metric", "value", "run_dir"], per_run)
    )
    atomic_write_text(txt_path, report_text(long_rows, rows_order, columns))
    return csv_path, txt_path


def report_text(long_rows, rows_order, columns) -> str:
    lookup = {(m, r, p, s): v for m, r, p, s, v, _ in long_rows}
    head = ["policy".ljust(14)] + [f"P{p} {s}".rjust(12) for p, s in columns]
    lines = []
    for metric in METRIC_NAMES:
        lines.append(metric)
        lines.append(" ".join(head))
        for row in rows_order:
            cells = [row.ljust(14)]
            for p, s in columns:
                v = lookup.get((metric, row, p, s))
                cells.append(("-" if v is None else f"{v:.4f}").rjust(12))
            lines.append(" ".join(cells))
        lines.append("")
    return "\n".join(lines)
