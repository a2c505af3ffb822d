"""Batch gap evaluation: strategy comparison tables and position curves.

``evaluate_gaps`` samples gap sites from a test corpus (without
replacement, away from sequence edges), runs every configured strategy
on the same sites, and aggregates per-strategy means. Sites keep their
identity across strategies, so comparisons are paired, and a strategy's
numbers never depend on which other strategies run or in what order.

Gaps whose NLL is infinite (a zero-probability forced draw) are counted
and excluded from means; a single such gap would otherwise dominate the
table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import GapSpec, onehot_from_indices
from .inference import (
    ChainConfig,
    OneGramStats,
    bayes_mcmc_fill,
    gsn_fill,
    nade_exact_gap_nll,
    onegram_nll,
    oneway_fill,
)
from .models import BiRnnParams, UniRnnParams, bi_forward, step_nll, uni_forward
from .seeding import rng_for, seed_sequence
from .training import BinaryCorpus, CategoricalCorpus

STRATEGY_MODEL_KEY = {
    "gsn": "gsn",
    "nade": "nade",
    "bayes_mcmc": "uni",
    "oneway": "uni",
    "onegram": "onegram",
}


@dataclass
class EvalConfig:
    gap_len: int = 5
    n_gaps: int = 500
    edge_exclusion: int = 10
    strategies: tuple = ("gsn", "nade", "bayes_mcmc", "oneway", "onegram")
    seed: int = 0
    seq_len: int = 50  # evaluation window length for stream corpora
    mcmc_steps: int = 100
    n_chains: int = 100
    n_gaps_override: dict = field(default_factory=dict)  # strategy -> smaller budget

    def __post_init__(self):
        if self.gap_len < 1 or self.edge_exclusion < 0:
            raise ValueError("gap_len must be >= 1 and edge_exclusion >= 0")
        unknown = set(self.strategies) - set(STRATEGY_MODEL_KEY)
        if unknown:
            raise ValueError(f"unknown strategies: {sorted(unknown)}")


@dataclass
class EvalReport:
    config: dict
    records: list
    summary: dict

    def to_json(self) -> str:
        return json.dumps(
            {"config": self.config, "summary": self.summary, "records": self.records},
            sort_keys=True,
        )

    def table1_rows(self) -> list[tuple]:
        return [
            (s, v["n_gaps"], v["mean_gap_nll"], v["n_flagged"])
            for s, v in sorted(self.summary.items())
        ]

    def per_position_rows(self) -> list[tuple]:
        rows = []
        for s, v in sorted(self.summary.items()):
            for j, nll in enumerate(v["per_position_nll"]):
                rows.append((s, j + 1, nll))
        return rows


def _gap_sites(data, cfg: EvalConfig) -> list[tuple[np.ndarray, GapSpec]]:
    """Sampled (window, gap) pairs, identical for every strategy."""
    g, edge = cfg.gap_len, cfg.edge_exclusion
    rng = rng_for(cfg.seed, "gap-sites")
    sites = []
    if isinstance(data, CategoricalCorpus):
        t = cfg.seq_len
        if t < 2 * edge + g:
            raise ValueError(f"window of {t} is shorter than 2*{edge} + {g}")
        n = data.indices.shape[0]
        if n < t:
            raise ValueError(f"test corpus of {n} steps is shorter than one window")
        offset = (t - g) // 2
        starts = rng.choice(n - t + 1, size=min(cfg.n_gaps, n - t + 1), replace=False)
        for w in np.sort(starts):
            x = onehot_from_indices(data.indices[w : w + t], data.n_symbols)
            sites.append((x, GapSpec(offset, g)))
        return sites
    if isinstance(data, BinaryCorpus):
        candidates = []
        for si, score in enumerate(data.scores):
            hi = score.shape[0] - edge - g
            for start in range(edge, hi + 1):
                candidates.append((si, start))
        if not candidates:
            raise ValueError(f"no score admits a gap of {g} away from {edge}-step edges")
        pick = rng.choice(len(candidates), size=min(cfg.n_gaps, len(candidates)), replace=False)
        for i in np.sort(pick):
            si, start = candidates[i]
            sites.append((data.scores[si].copy(), GapSpec(start, g)))
        return sites
    raise ValueError(f"cannot evaluate over {type(data).__name__}")


def _site_seed(master: int, site_index: int) -> int:
    return int(seed_sequence(master, "site", site_index).generate_state(1)[0])


def run_strategy(
    strategy: str, model, x: np.ndarray, gap: GapSpec, chain_cfg: ChainConfig
):
    if strategy == "gsn":
        return gsn_fill(model, x, gap, chain_cfg)
    if strategy == "nade":
        return nade_exact_gap_nll(model, x, gap)
    if strategy == "bayes_mcmc":
        return bayes_mcmc_fill(model, x, gap, chain_cfg)
    if strategy == "oneway":
        return oneway_fill(model, x, gap, chain_cfg)
    if strategy == "onegram":
        return onegram_nll(model, x, gap)
    raise ValueError(f"unknown strategy {strategy!r}")


def _check_models(models: dict, strategies) -> None:
    missing = [
        s for s in strategies if STRATEGY_MODEL_KEY[s] not in models
    ]
    if missing:
        needs = {s: STRATEGY_MODEL_KEY[s] for s in missing}
        raise ValueError(f"missing models for strategies: {needs}")


def evaluate_gaps(models: dict, data, cfg: EvalConfig) -> EvalReport:
    """Run every configured strategy over the sampled gap sites.

    ``models`` maps model keys to parameters: ``gsn`` and ``nade`` are
    two-directional checkpoints (the latter with the missing channel),
    ``uni`` serves both bayes_mcmc and oneway, ``onegram`` is the
    statistics object. Deterministic given ``cfg.seed``.
    """
    _check_models(models, cfg.strategies)
    sites = _gap_sites(data, cfg)
    records = []
    for strategy in cfg.strategies:
        budget = cfg.n_gaps_override.get(strategy, cfg.n_gaps)
        model = models[STRATEGY_MODEL_KEY[strategy]]
        for si, (x, gap) in enumerate(sites[:budget]):
            chain_cfg = ChainConfig(
                mcmc_steps=cfg.mcmc_steps,
                n_chains=cfg.n_chains,
                seed=_site_seed(cfg.seed, si),
            )
            res = run_strategy(strategy, model, x, gap, chain_cfg)
            records.append(
                {
                    "strategy": strategy,
                    "site": si,
                    "gap_start": gap.start,
                    "gap_len": gap.length,
                    "gap_nll": float(res.gap_nll),
                    "per_position_nll": [float(v) for v in res.per_position_nll],
                    "flags": list(res.flags),
                    "n_chains": res.n_chains,
                    "M": res.mcmc_steps,
                }
            )
    summary = summarize_records(records)
    cfg_dict = {
        "gap_len": cfg.gap_len,
        "n_gaps": cfg.n_gaps,
        "edge_exclusion": cfg.edge_exclusion,
        "strategies": list(cfg.strategies),
        "seed": cfg.seed,
        "seq_len": cfg.seq_len,
        "mcmc_steps": cfg.mcmc_steps,
        "n_chains": cfg.n_chains,
        "n_gaps_override": dict(cfg.n_gaps_override),
    }
    return EvalReport(config=cfg_dict, records=records, summary=summary)


def summarize_records(records: list) -> dict:
    """Per-strategy means over finite-NLL records; flags counted."""
    summary = {}
    for strategy in sorted({r["strategy"] for r in records}):
        rows = [r for r in records if r["strategy"] == strategy]
        ok = [r for r in rows if np.isfinite(r["gap_nll"])]
        n_flagged = sum(1 for r in rows if r["flags"])
        if ok:
            mean_nll = float(np.mean([r["gap_nll"] for r in ok]))
            per_pos = np.mean([r["per_position_nll"] for r in ok], axis=0)
            per_pos = [float(v) for v in per_pos]
        else:
            mean_nll, per_pos = float("inf"), []
        summary[strategy] = {
            "n_gaps": len(rows),
            "n_used": len(ok),
            "n_flagged": n_flagged,
            "mean_gap_nll": mean_nll,
            "per_position_nll": per_pos,
        }
    return summary


def per_position_curves(report: EvalReport) -> list[tuple]:
    """Long-form (strategy, position, mean NLL) rows for plotting."""
    return report.per_position_rows()


def gsn_step_curve(models: dict, data, m_grid, cfg: EvalConfig) -> list[tuple]:
    """GSN-minus-NADE mean gap NLL as a function of the MCMC step budget.

    Both strategies run on one fixed gap sample; the NADE term does not
    depend on M and is computed once.
    """
    m_grid = [int(m) for m in m_grid]
    if min(m_grid) < cfg.gap_len:
        raise ValueError(f"every M must be >= the gap length {cfg.gap_len}")
    _check_models(models, ("gsn", "nade"))
    sites = _gap_sites(data, cfg)[: cfg.n_gaps]
    nade_nlls = [
        nade_exact_gap_nll(models["nade"], x, gap).gap_nll for x, gap in sites
    ]
    nade_mean = float(np.mean([v for v in nade_nlls if np.isfinite(v)]))
    rows = []
    for m in m_grid:
        gsn_nlls = []
        for si, (x, gap) in enumerate(sites):
            chain_cfg = ChainConfig(
                mcmc_steps=m, n_chains=cfg.n_chains, seed=_site_seed(cfg.seed, si)
            )
            gsn_nlls.append(gsn_fill(models["gsn"], x, gap, chain_cfg).gap_nll)
        gsn_mean = float(np.mean([v for v in gsn_nlls if np.isfinite(v)]))
        rows.append((m, gsn_mean, nade_mean, gsn_mean - nade_mean))
    return rows


def single_step_nll(models: dict, data, cfg: EvalConfig) -> list[tuple]:
    """Mean NLL of single-step gaps per model, a training sanity table.

    Two-directional models score the step's conditional directly (the
    missing-channel variant marks the step missing first); the
    one-directional model scores its next-step prediction.
    """
    site_cfg = EvalConfig(
        gap_len=1,
        n_gaps=cfg.n_gaps,
        edge_exclusion=cfg.edge_exclusion,
        strategies=("onegram",),
        seed=cfg.seed,
        seq_len=cfg.seq_len,
    )
    sites = _gap_sites(data, site_cfg)
    rows = []
    for name, model in models.items():
        if isinstance(model, OneGramStats):
            nlls = [onegram_nll(model, x, gap).gap_nll for x, gap in sites]
        elif isinstance(model, BiRnnParams) and model.has_missing_channel:
            nlls = [nade_exact_gap_nll(model, x, gap).gap_nll for x, gap in sites]
        elif isinstance(model, BiRnnParams):
            nlls = [
                step_nll(bi_forward(model, x)[gap.start], x[gap.start], model.family)
                for x, gap in sites
            ]
        elif isinstance(model, UniRnnParams):
            nlls = [
                step_nll(uni_forward(model, x)[gap.start - 1], x[gap.start], model.family)
                for x, gap in sites
            ]
        else:
            raise ValueError(f"cannot score model {name!r} of type {type(model).__name__}")
        finite = [v for v in nlls if np.isfinite(v)]
        rows.append((name, float(np.mean(finite)), len(nlls)))
    return rows


# ---------------------------------------------------------------------------
# CSV emission (full-precision floats so identical runs are byte-identical)
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_csv(path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(header + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def write_report_files(outdir, report: EvalReport) -> list[str]:
    """table1.csv, fig2.csv and report.json under ``outdir``."""
    import os

    paths = []
    p = os.path.join(outdir, "table1.csv")
    write_csv(p, "strategy,n_gaps,mean_gap_nll,n_flagged", report.table1_rows())
    paths.append(p)
    p = os.path.join(outdir, "fig2.csv")
    write_csv(p, "strategy,position,mean_nll", report.per_position_rows())
    paths.append(p)
    p = os.path.join(outdir, "report.json")
    with open(p, "w", encoding="utf-8") as f:
        f.write(report.to_json())
    paths.append(p)
    return paths
