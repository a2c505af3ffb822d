"""Command-line front end: prepare, train, fill, eval, gridsearch.

Every command takes ``--out DIR``, writes its artifacts there, and drops
a ``manifest.json`` recording the resolved configuration, the seed,
SHA-256 hashes of the inputs, the outputs, and wall time; re-running the
argv reconstructed from a manifest reproduces the outputs. Option
precedence is CLI flag over ``--config`` JSON file over built-in
default. All randomness flows from ``--seed``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

from . import evaluate as ev
from . import inference, training
from .corpus import (
    Alphabet,
    GapSpec,
    build_alphabet,
    decode_onehot,
    encode_indices,
    load_pianoroll,
    onehot_from_indices,
)
from .models import load_checkpoint, save_checkpoint
from .seeding import rng_for

PACKAGE_VERSION = "0.1.0"


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(outdir, command: str, resolved: dict, inputs: list, outputs: list, t0: float) -> str:
    manifest = {
        "command": command,
        "config": resolved,
        "seed": resolved.get("seed", 0),
        "input_hashes": {p: _sha256(p) for p in inputs if p and os.path.exists(p)},
        "outputs": [str(p) for p in outputs],
        "wall_time_s": time.time() - t0,
        "version": PACKAGE_VERSION,
    }
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return path


def manifest_to_argv(manifest: dict) -> list[str]:
    """Reconstruct the command line that reproduces a manifest's run."""
    argv = [manifest["command"]]
    for key, value in sorted(manifest["config"].items()):
        if value is None:
            continue
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            if value:
                argv.append(flag)
        else:
            argv.extend([flag, str(value)])
    return argv


# ---------------------------------------------------------------------------
# option resolution
# ---------------------------------------------------------------------------


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """CLI flag > config file > default, for every known option."""
    from_file = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as f:
            from_file = json.load(f)
        unknown = set(from_file) - set(defaults)
        if unknown:
            raise UsageError(f"config file sets unknown options: {sorted(unknown)}")
    resolved = {}
    for key, default in defaults.items():
        cli = getattr(args, key, None)
        if cli is not None:
            resolved[key] = cli
        elif key in from_file:
            resolved[key] = from_file[key]
        else:
            resolved[key] = default
    return resolved


def _require(resolved: dict, *keys: str) -> None:
    missing = [k for k in keys if resolved.get(k) in (None, "")]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise UsageError(f"missing required options: {flags}")


def _load_text_corpus(path: str, alphabet: Alphabet) -> training.CategoricalCorpus:
    with open(path, encoding="utf-8") as f:
        text = f.read()
    return training.CategoricalCorpus(encode_indices(text, alphabet), alphabet.size)


def _load_binary_corpus(path: str) -> training.BinaryCorpus:
    scores = load_pianoroll(path)
    if not scores:
        raise UsageError(f"{path} contains no scores")
    return training.BinaryCorpus(tuple(scores), scores[0].shape[1])


def _parse_gap(text: str) -> GapSpec:
    try:
        start, length = text.split(":")
        return GapSpec(int(start), int(length))
    except (ValueError, TypeError):
        raise UsageError(f"--gap must be start:len, got {text!r}")


# ---------------------------------------------------------------------------
# prepare
# ---------------------------------------------------------------------------

_PREPARE_DEFAULTS = {
    "data": None,
    "format": "text",
    "max_symbols": 95,
    "out": None,
    "seed": 0,
}


def cmd_prepare(args) -> int:
    t0 = time.time()
    r = _resolve(args, _PREPARE_DEFAULTS)
    _require(r, "data", "out")
    os.makedirs(r["out"], exist_ok=True)
    outputs = []
    if r["format"] == "text":
        with open(r["data"], encoding="utf-8") as f:
            text = f.read()
        alphabet = build_alphabet(text, r["max_symbols"])
        apath = os.path.join(r["out"], "alphabet.json")
        alphabet.save(apath)
        outputs.append(apath)
        data = training.CategoricalCorpus(encode_indices(text, alphabet), alphabet.size)
    elif r["format"] == "pianoroll":
        data = _load_binary_corpus(r["data"])
    else:
        raise UsageError(f"unknown format {r['format']!r}")
    stats = inference.fit_onegram(data)
    spath = os.path.join(r["out"], "onegram.json")
    with open(spath, "w", encoding="utf-8") as f:
        f.write(stats.to_json())
    outputs.append(spath)
    outputs.append(write_manifest(r["out"], "prepare", r, [r["data"]], outputs, t0))
    print(f"prepared {len(outputs) - 1} artifact(s) in {r['out']}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

_TRAIN_DEFAULTS = {
    "data": None,
    "format": "text",
    "alphabet": None,
    "kind": None,
    "regime": None,
    "T": 50,
    "updates": 1000,
    "hidden": 100,
    "batch": 40,
    "step_size": 0.25,
    "burnin_head": None,
    "burnin_tail": None,
    "gap_len": 5,
    "stride": 25,
    "seed": 0,
    "log_every": 1,
    "out": None,
}

_REGIME_KIND = {"uni": "uni", "brnn": "brnn", "nade_masked": "brnn", "nade_no_mask": "brnn"}


def cmd_train(args) -> int:
    t0 = time.time()
    r = _resolve(args, _TRAIN_DEFAULTS)
    _require(r, "data", "out", "kind")
    if r["regime"] is None:
        r["regime"] = "uni" if r["kind"] == "uni" else "brnn"
    if r["regime"] not in _REGIME_KIND:
        raise UsageError(f"unknown regime {r['regime']!r}")
    if _REGIME_KIND[r["regime"]] != r["kind"]:
        raise UsageError(f"regime {r['regime']} requires --kind {_REGIME_KIND[r['regime']]}")
    if r["format"] == "text":
        _require(r, "alphabet")
        data = _load_text_corpus(r["data"], Alphabet.load(r["alphabet"]))
    else:
        data = _load_binary_corpus(r["data"])
    burnin = None
    if r["burnin_head"] is not None or r["burnin_tail"] is not None:
        burnin = (float(r["burnin_head"] or 0.0), float(r["burnin_tail"] or 0.0))
    cfg = training.TrainConfig(
        seq_len=r["T"],
        total_updates=r["updates"],
        hidden_size=r["hidden"],
        minibatch_size=r["batch"],
        step_size=r["step_size"],
        burnin=burnin,
        nade_masking={"uni": "off", "brnn": "off", "nade_masked": "masked", "nade_no_mask": "no_mask"}[r["regime"]],
        nade_gap_len=r["gap_len"],
        nade_stride=r["stride"],
        seed=r["seed"],
        log_every=r["log_every"],
    )
    model_kind = "uni" if r["kind"] == "uni" else "bi"
    params, trace = training.train(model_kind, data, cfg)
    os.makedirs(r["out"], exist_ok=True)
    cpath = os.path.join(r["out"], "checkpoint.bin")
    save_checkpoint(params, cpath)
    tpath = os.path.join(r["out"], "trace.csv")
    training.write_trace_csv(tpath, trace)
    inputs = [r["data"]] + ([r["alphabet"]] if r["alphabet"] else [])
    write_manifest(r["out"], "train", r, inputs, [cpath, tpath], t0)
    print(f"trained {r['regime']} model: final loss {trace[-1][2]:.4f} -> {cpath}")
    return 0


# ---------------------------------------------------------------------------
# fill
# ---------------------------------------------------------------------------

_FILL_DEFAULTS = {
    "checkpoint": None,
    "strategy": None,
    "data": None,
    "format": "text",
    "alphabet": None,
    "stats": None,
    "gap": None,
    "M": 100,
    "chains": 100,
    "seed": 0,
    "out": None,
}


def _sample_fill(strategy, model, x, gap, chain_cfg, rng):
    """One filled sequence for display (nade and onegram; the chain
    strategies hand back samples through their GapResult)."""
    d = x.shape[1]
    filled = x.copy()
    if strategy == "nade":
        filled, _ = inference.nade_fill(model, x, gap, rng)
        return filled
    if strategy == "onegram":
        for p in gap.positions():
            if model.family == "softmax":
                v = int(rng.choice(d, p=model.probs))
                filled[p] = 0.0
                filled[p, v] = 1.0
            else:
                filled[p] = (rng.random(d) < model.probs).astype(float)
        return filled
    raise ValueError(f"no sampler for strategy {strategy!r}")


def cmd_fill(args) -> int:
    t0 = time.time()
    r = _resolve(args, _FILL_DEFAULTS)
    _require(r, "data", "out", "strategy", "gap")
    strategy = r["strategy"]
    if strategy not in inference.STRATEGIES:
        raise UsageError(f"unknown strategy {strategy!r}")
    gap = _parse_gap(r["gap"])
    alphabet = None
    if r["format"] == "text":
        _require(r, "alphabet")
        alphabet = Alphabet.load(r["alphabet"])
        with open(r["data"], encoding="utf-8") as f:
            text = f.read().rstrip("\n")
        x = onehot_from_indices(encode_indices(text, alphabet), alphabet.size)
    else:
        scores = load_pianoroll(r["data"])
        if not scores:
            raise UsageError(f"{r['data']} contains no scores")
        x = scores[0]
    gap.check_inside(x.shape[0])

    chain_cfg = inference.ChainConfig(
        mcmc_steps=r["M"], n_chains=r["chains"], seed=r["seed"], keep_samples=True
    )
    rng = rng_for(r["seed"], "fill-sample")
    if strategy == "onegram":
        _require(r, "stats")
        with open(r["stats"], encoding="utf-8") as f:
            model = inference.OneGramStats.from_json(f.read())
        result = inference.onegram_nll(model, x, gap)
        filled = _sample_fill("onegram", model, x, gap, chain_cfg, rng)
    else:
        _require(r, "checkpoint")
        expect = "uni" if strategy in ("bayes_mcmc", "oneway") else "bi"
        model = load_checkpoint(r["checkpoint"], expect_kind=expect)
        result = ev.run_strategy(strategy, model, x, gap, chain_cfg)
        if strategy == "nade":
            filled = _sample_fill("nade", model, x, gap, chain_cfg, rng)
        elif strategy == "gsn":
            filled = x.copy()
            filled[gap.positions(), :] = result.samples[0][:, : model.d_out]
        elif strategy == "bayes_mcmc":
            filled = x.copy()
            filled[gap.positions(), :] = 0.0
            filled[gap.positions(), result.samples[0]] = 1.0
        else:  # oneway: a single sampled left-to-right pass
            sample_cfg = inference.ChainConfig(
                mcmc_steps=r["M"], n_chains=1, seed=r["seed"], keep_samples=True
            )
            one = inference.oneway_fill(model, x, gap, sample_cfg)
            filled = x.copy()
            filled[gap.positions(), :] = one.samples[0][:, : model.d_out]

    os.makedirs(r["out"], exist_ok=True)
    gpath = os.path.join(r["out"], "gapresult.json")
    with open(gpath, "w", encoding="utf-8") as f:
        f.write(result.to_json())
    outputs = [gpath]
    if alphabet is not None:
        rendered = decode_onehot(filled, alphabet)
        fpath = os.path.join(r["out"], "filled.txt")
        with open(fpath, "w", encoding="utf-8") as f:
            f.write(rendered + "\n")
        print(rendered)
        print(f"gap [{gap.start}:{gap.stop}) -> {rendered[gap.start:gap.stop]!r}")
    else:
        fpath = os.path.join(r["out"], "filled.json")
        with open(fpath, "w", encoding="utf-8") as f:
            json.dump(filled[gap.positions()].astype(int).tolist(), f)
        print(json.dumps(filled[gap.positions()].astype(int).tolist()))
    outputs.append(fpath)
    print(f"gap NLL ({strategy}): {result.gap_nll:.4f}")
    inputs = [p for p in (r["data"], r["alphabet"], r["checkpoint"], r["stats"]) if p]
    write_manifest(r["out"], "fill", r, inputs, outputs, t0)
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

_EVAL_DEFAULTS = {
    "data": None,
    "format": "text",
    "alphabet": None,
    "stats": None,
    "checkpoint_uni": None,
    "checkpoint_gsn": None,
    "checkpoint_nade": None,
    "strategies": "gsn,nade,bayes_mcmc,oneway,onegram",
    "g": 5,
    "n_gaps": 500,
    "bayes_gaps": None,
    "edge": 10,
    "T": 50,
    "M": 100,
    "chains": 100,
    "seed": 0,
    "fig3": False,
    "m_grid": None,
    "table2": False,
    "out": None,
}


def cmd_eval(args) -> int:
    t0 = time.time()
    r = _resolve(args, _EVAL_DEFAULTS)
    _require(r, "data", "out")
    strategies = tuple(s.strip() for s in r["strategies"].split(",") if s.strip())
    if r["format"] == "text":
        _require(r, "alphabet")
        data = _load_text_corpus(r["data"], Alphabet.load(r["alphabet"]))
    else:
        data = _load_binary_corpus(r["data"])

    models = {}
    if r["checkpoint_uni"]:
        models["uni"] = load_checkpoint(r["checkpoint_uni"], expect_kind="uni")
    if r["checkpoint_gsn"]:
        models["gsn"] = load_checkpoint(r["checkpoint_gsn"], expect_kind="bi")
    if r["checkpoint_nade"]:
        models["nade"] = load_checkpoint(r["checkpoint_nade"], expect_kind="bi")
    if r["stats"]:
        with open(r["stats"], encoding="utf-8") as f:
            models["onegram"] = inference.OneGramStats.from_json(f.read())

    override = {}
    if r["bayes_gaps"] is not None:
        override["bayes_mcmc"] = int(r["bayes_gaps"])
    cfg = ev.EvalConfig(
        gap_len=r["g"],
        n_gaps=r["n_gaps"],
        edge_exclusion=r["edge"],
        strategies=strategies,
        seed=r["seed"],
        seq_len=r["T"],
        mcmc_steps=r["M"],
        n_chains=r["chains"],
        n_gaps_override=override,
    )
    os.makedirs(r["out"], exist_ok=True)
    report = ev.evaluate_gaps(models, data, cfg)
    outputs = ev.write_report_files(r["out"], report)
    if r["fig3"]:
        if not r["m_grid"]:
            raise UsageError("--fig3 needs --m-grid M1,M2,...")
        grid = [int(v) for v in str(r["m_grid"]).split(",") if v.strip()]
        rows = ev.gsn_step_curve(models, data, grid, cfg)
        p = os.path.join(r["out"], "fig3.csv")
        ev.write_csv(p, "M,gsn_mean_nll,nade_mean_nll,difference", rows)
        outputs.append(p)
    if r["table2"]:
        rows = ev.single_step_nll(models, data, cfg)
        p = os.path.join(r["out"], "table2.csv")
        ev.write_csv(p, "model,mean_single_step_nll,n_gaps", rows)
        outputs.append(p)
    inputs = [
        p
        for p in (
            r["data"], r["alphabet"], r["stats"], r["checkpoint_uni"],
            r["checkpoint_gsn"], r["checkpoint_nade"],
        )
        if p
    ]
    write_manifest(r["out"], "eval", r, inputs, outputs, t0)
    for s, row in sorted(report.summary.items()):
        print(f"{s}: mean gap NLL {row['mean_gap_nll']:.4f} over {row['n_used']} gaps")
    return 0


# ---------------------------------------------------------------------------
# gridsearch
# ---------------------------------------------------------------------------

_GRID_DEFAULTS = {
    "rates": None,
    "data": None,
    "format": "text",
    "alphabet": None,
    "kind": "brnn",
    "regime": None,
    "T": 50,
    "updates": 500,
    "hidden": 64,
    "batch": 40,
    "val_frac": 0.1,
    "seed": 0,
    "out": None,
}


def cmd_gridsearch(args) -> int:
    t0 = time.time()
    r = _resolve(args, _GRID_DEFAULTS)
    _require(r, "rates", "data", "out")
    rates = [float(v) for v in str(r["rates"]).split(",") if v.strip()]
    if not rates:
        raise UsageError("the learning-rate grid is empty")
    if r["regime"] is None:
        r["regime"] = "uni" if r["kind"] == "uni" else "brnn"
    if _REGIME_KIND.get(r["regime"]) != r["kind"]:
        raise UsageError(f"regime {r['regime']} requires --kind {_REGIME_KIND.get(r['regime'])}")
    if r["format"] == "text":
        _require(r, "alphabet")
        full = _load_text_corpus(r["data"], Alphabet.load(r["alphabet"]))
        n_val = max(int(full.indices.shape[0] * float(r["val_frac"])), r["T"] + 1)
        train_data = training.CategoricalCorpus(full.indices[:-n_val], full.n_symbols)
        val_data = training.CategoricalCorpus(full.indices[-n_val:], full.n_symbols)
    else:
        full = _load_binary_corpus(r["data"])
        n_val = max(int(len(full.scores) * float(r["val_frac"])), 1)
        train_data = training.BinaryCorpus(full.scores[:-n_val], full.dim)
        val_data = training.BinaryCorpus(full.scores[-n_val:], full.dim)
        if not train_data.scores:
            raise UsageError("not enough scores for a train/validation split")

    model_kind = "uni" if r["kind"] == "uni" else "bi"
    regime = r["regime"]
    nade_masking = {"uni": "off", "brnn": "off", "nade_masked": "masked", "nade_no_mask": "no_mask"}[regime]
    rows = []
    for rate in rates:
        cfg = training.TrainConfig(
            seq_len=r["T"],
            total_updates=r["updates"],
            hidden_size=r["hidden"],
            minibatch_size=r["batch"],
            step_size=rate,
            nade_masking=nade_masking,
            seed=r["seed"],
            log_every=max(r["updates"] // 10, 1),
        )
        params, _ = training.train(model_kind, train_data, cfg)
        val = training.validation_loss(params, val_data, regime, cfg, seed=r["seed"])
        rows.append((rate, val))
    best_rate, best_val = min(rows, key=lambda kv: kv[1])
    os.makedirs(r["out"], exist_ok=True)
    rpath = os.path.join(r["out"], "rates.csv")
    ev.write_csv(rpath, "step_size,validation_loss", rows)
    bpath = os.path.join(r["out"], "best.json")
    with open(bpath, "w", encoding="utf-8") as f:
        json.dump({"step_size": best_rate, "validation_loss": best_val}, f, sort_keys=True)
    inputs = [p for p in (r["data"], r["alphabet"]) if p]
    write_manifest(r["out"], "gridsearch", r, inputs, [rpath, bpath], t0)
    print(f"best step size {best_rate} (validation loss {best_val:.4f})")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with option defaults")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqgap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build alphabet and baseline statistics")
    _add_common(p)
    p.add_argument("--data")
    p.add_argument("--format", choices=("text", "pianoroll"))
    p.add_argument("--max-symbols", dest="max_symbols", type=int)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model")
    _add_common(p)
    p.add_argument("--data")
    p.add_argument("--format", choices=("text", "pianoroll"))
    p.add_argument("--alphabet")
    p.add_argument("--kind", choices=("uni", "brnn"))
    p.add_argument("--regime", choices=("uni", "brnn", "nade_masked", "nade_no_mask"))
    p.add_argument("--T", type=int)
    p.add_argument("--updates", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--step-size", dest="step_size", type=float)
    p.add_argument("--burnin-head", dest="burnin_head", type=float)
    p.add_argument("--burnin-tail", dest="burnin_tail", type=float)
    p.add_argument("--gap-len", dest="gap_len", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--log-every", dest="log_every", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fill", help="fill one gap in one sequence")
    _add_common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--strategy", choices=inference.STRATEGIES)
    p.add_argument("--data")
    p.add_argument("--format", choices=("text", "pianoroll"))
    p.add_argument("--alphabet")
    p.add_argument("--stats")
    p.add_argument("--gap", help="start:len")
    p.add_argument("--M", type=int)
    p.add_argument("--chains", type=int)
    p.set_defaults(func=cmd_fill)

    p = sub.add_parser("eval", help="strategy comparison tables")
    _add_common(p)
    p.add_argument("--data")
    p.add_argument("--format", choices=("text", "pianoroll"))
    p.add_argument("--alphabet")
    p.add_argument("--stats")
    p.add_argument("--checkpoint-uni", dest="checkpoint_uni")
    p.add_argument("--checkpoint-gsn", dest="checkpoint_gsn")
    p.add_argument("--checkpoint-nade", dest="checkpoint_nade")
    p.add_argument("--strategies")
    p.add_argument("--g", type=int)
    p.add_argument("--n-gaps", dest="n_gaps", type=int)
    p.add_argument("--bayes-gaps", dest="bayes_gaps", type=int)
    p.add_argument("--edge", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--fig3", action="store_const", const=True)
    p.add_argument("--m-grid", dest="m_grid")
    p.add_argument("--table2", action="store_const", const=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gridsearch", help="step-size grid search")
    _add_common(p)
    p.add_argument("--rates")
    p.add_argument("--data")
    p.add_argument("--format", choices=("text", "pianoroll"))
    p.add_argument("--alphabet")
    p.add_argument("--kind", choices=("uni", "brnn"))
    p.add_argument("--regime", choices=("uni", "brnn", "nade_masked", "nade_no_mask"))
    p.add_argument("--T", type=int)
    p.add_argument("--updates", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--val-frac", dest="val_frac", type=float)
    p.set_defaults(func=cmd_gridsearch)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
