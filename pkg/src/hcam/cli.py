"""``hcam`` command-line entry point.

Every command writes ``<name>.json`` (machine-readable, ``schema_version``
header, no timestamps) and ``<name>.txt`` (human summary) into its output
directory and refuses to overwrite either. Timestamps go to ``run.log``.

Exit codes: 0 ok, 1 usage, 2 data contract, 3 numeric failure.
"""
import argparse
import datetime
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .dataio import SyntheticSpec, generate_synthetic, load_manifest
from .errors import ConfigError, HcamError, OutputExistsError
from .inference import alpha_grid, argmax_labels, ensemble_stage2, weighted_f1
from .losses import LossConfig
from .pipeline import (MODALITIES, TrainConfig, Workspace, collect_predictions, evaluate_workspace,
                       extract_embeddings, mean_std, run_extract, run_train, store_f1,
                       train_stage1, train_stage2, train_stage3)

SCHEMA_VERSION = 1
log = logging.getLogger("hcam")

EXPERIMENT_KEYS = {"data", "output_dir", "seeds", "train", "stages", "ensemble", "synthetic"}
STAGE_NAMES = {"1": 1, "2": 2, "3": 3, "joint23": "joint23"}


# -- configuration ----------------------------------------------------------
class ExperimentConfig:
    """Validated contents of the JSON config file plus flag overrides (flags win)."""

    def __init__(self, raw=None):
        raw = dict(raw or {})
        unknown = set(raw) - EXPERIMENT_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        self.data = raw.get("data")
        self.output_dir = raw.get("output_dir")
        self.seeds = [int(s) for s in raw.get("seeds", [0])]
        self.train = dict(raw.get("train", {}))
        self.stages = {str(k): dict(v) for k, v in raw.get("stages", {}).items()}
        bad = set(self.stages) - set(STAGE_NAMES)
        if bad:
            raise ConfigError(f"unknown stage sections {sorted(bad)}")
        self.ensemble = dict(raw.get("ensemble", {}))
        bad = set(self.ensemble) - {"grid_step", "split"}
        if bad:
            raise ConfigError(f"unknown ensemble keys {sorted(bad)}")
        self.synthetic = dict(raw.get("synthetic", {}))
        bad = set(self.synthetic) - {f.name for f in fields(SyntheticSpec)}
        if bad:
            raise ConfigError(f"unknown synthetic keys {sorted(bad)}")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        # validate every stage config eagerly, before any work starts
        for s in STAGE_NAMES:
            self.stage_config(s, self.seeds[0])

    @classmethod
    def load(cls, path):
        if path is None:
            return cls()
        try:
            return cls(json.loads(Path(path).read_text()))
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None

    def stage_config(self, stage, seed):
        d = dict(self.train)
        over = self.stages.get(str(stage), {})
        loss = dict(d.pop("loss", {}))
        loss.update(over.get("loss", {}))
        d.update({k: v for k, v in over.items() if k != "loss"})
        if str(stage) == "joint23" and "max_epochs" not in over:
            # the joint baseline gets the epoch budget of stages II and III together
            d["max_epochs"] = (self.stage_config(2, seed).max_epochs
                               + self.stage_config(3, seed).max_epochs)
        d["loss"] = loss
        d["seed"] = seed
        d["stage"] = STAGE_NAMES[str(stage)]
        d.setdefault("modality", "fused" if str(stage) in ("3", "joint23") else "audio")
        try:
            return TrainConfig.from_dict(d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    def apply_flags(self, args):
        if getattr(args, "data", None):
            self.data = args.data
        if getattr(args, "work", None):
            self.output_dir = args.work
        if getattr(args, "seeds", None):
            self.seeds = _int_list(args.seeds)
        flag_map = {"lr": "learning_rate", "epochs": "max_epochs", "batch_size": "batch_size",
                    "d_model": "d_model", "patience": "patience", "dropout": "dropout",
                    "clip_norm": "clip_norm"}
        for flag, key in flag_map.items():
            v = getattr(args, flag, None)
            if v is not None:
                self.train[key] = v
                for sec in self.stages.values():
                    sec.pop(key, None)
        for flag in ("beta", "tau"):
            v = getattr(args, flag, None)
            if v is not None:
                self.train.setdefault("loss", {})[flag] = v
                for sec in self.stages.values():
                    sec.get("loss", {}).pop(flag, None)
        if getattr(args, "grid_step", None) is not None:
            self.ensemble["grid_step"] = args.grid_step
        for s in STAGE_NAMES:
            self.stage_config(s, self.seeds[0])
        return self

    def to_dict(self):
        return {"data": self.data, "output_dir": self.output_dir, "seeds": self.seeds,
                "train": self.train, "stages": self.stages, "ensemble": self.ensemble,
                "synthetic": self.synthetic}

    def require(self, *names):
        for n in names:
            if getattr(self, n) is None:
                raise ConfigError(f"missing {n!r}: pass it via the config file or a flag")


def _int_list(s):
    try:
        return [int(x) for x in str(s).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad integer list {s!r}") from None


def _float_list(s):
    try:
        return [float(x) for x in str(s).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad number list {s!r}") from None


# -- output -----------------------------------------------------------------
def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    return o


def emit(out_dir, name, command, payload, summary):
    """Write ``name.json`` + ``name.txt``; refuse to overwrite."""
    out = Path(out_dir)
    jpath, tpath = out / f"{name}.json", out / f"{name}.txt"
    for p in (jpath, tpath):
        if p.exists():
            raise OutputExistsError(f"{p} exists; refusing to overwrite (choose another output directory)")
    out.mkdir(parents=True, exist_ok=True)
    doc = {"schema_version": SCHEMA_VERSION, "command": command, **_jsonable(payload)}
    jpath.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    tpath.write_text(summary.rstrip() + "\n")
    with open(out / "run.log", "a") as fh:
        fh.write(f"{datetime.datetime.now().isoformat(timespec='seconds')}\t{command}\t{name}\n")
    print(summary.rstrip())
    return jpath


def _fmt(ms):
    return f"{ms['mean']:.4f} ± {ms['std']:.4f}"


def _ws(cfg, seed):
    return Workspace(Path(cfg.output_dir) / f"seed{seed}")


def _manifest(cfg):
    cfg.require("data")
    p = Path(cfg.data)
    return load_manifest(p / "manifest.tsv" if p.is_dir() else p)


def _modalities(stage, modality):
    if str(stage) in ("3", "joint23"):
        return ["fused"]
    return list(MODALITIES) if modality in (None, "both") else [modality]


# -- commands -----------------------------------------------------------------
def cmd_synth(args, cfg):
    d = dict(cfg.synthetic)
    for k in ("regime", "num_conversations", "num_classes", "window", "stay_prob", "audio_flip",
              "text_flip", "d_audio", "d_text"):
        v = getattr(args, k, None)
        if v is not None:
            d[k] = v
    if args.length is not None:
        ls = _int_list(args.length)
        d["length"] = ls[0] if len(ls) == 1 else ls
    if args.seed is not None:
        d["seed"] = args.seed
    try:
        spec = SyntheticSpec(**d)
    except TypeError as e:
        raise ConfigError(str(e)) from None
    out = Path(args.out)
    manifest = generate_synthetic(spec, out)
    from .dataio import load_sidecar
    side = load_sidecar(out)
    b = side["bayes"]
    summary = (f"synthetic regime {spec.regime}: {spec.num_conversations} conversations, "
               f"{spec.classes} classes -> {manifest}\n"
               f"Bayes accuracy  audio {b['audio_single']:.4f}  text {b['text_single']:.4f}  "
               f"joint {b['joint_single']:.4f}  full-context {b['context_full']}")
    emit(out, "synth", "synth", {"spec": asdict(spec), "manifest": str(manifest), "bayes": b}, summary)
    return 0


def cmd_train(args, cfg):
    cfg.require("data", "output_dir")
    m = _manifest(cfg)
    stage = STAGE_NAMES[args.stage]
    rows, lines = [], []
    for seed in cfg.seeds:
        ws = _ws(cfg, seed)
        for mod in _modalities(args.stage, args.modality):
            tc = cfg.stage_config(args.stage, seed)
            path = run_train(ws, tc, m, stage, None if mod == "fused" else mod)
            from .checkpoint import load_checkpoint
            ck = load_checkpoint(path)
            rows.append({"seed": seed, "modality": mod, "checkpoint": str(path),
                         "checkpoint_hash": ck.content_hash, "best_epoch": ck.info["best_epoch"],
                         "best_val_f1": ck.info["best_val_f1"], "epochs_run": ck.info["epochs_run"]})
            lines.append(f"seed {seed} stage {args.stage} {mod}: best val F1 {ck.info['best_val_f1']:.4f} "
                         f"at epoch {ck.info['best_epoch']} -> {path}")
    mods = "_".join(_modalities(args.stage, args.modality))
    emit(cfg.output_dir, f"train_stage{args.stage}_{mods}", "train",
         {"stage": args.stage, "config": cfg.to_dict(), "runs": rows}, "\n".join(lines))
    return 0


def cmd_extract(args, cfg):
    cfg.require("data", "output_dir")
    m = _manifest(cfg)
    stage = STAGE_NAMES[args.stage]
    rows, lines = [], []
    for seed in cfg.seeds:
        ws = _ws(cfg, seed)
        for mod in _modalities(args.stage, args.modality):
            store = run_extract(ws, m, stage, mod)
            rows.append({"seed": seed, "modality": mod, "store": str(ws.store_dir(stage, mod)),
                         "rows": len(store), "dim": int(store.embeddings.shape[1]),
                         "checkpoint_hash": store.meta["checkpoint_hash"]})
            lines.append(f"seed {seed} stage {args.stage} {mod}: {len(store)} embeddings "
                         f"of width {store.embeddings.shape[1]} -> {ws.store_dir(stage, mod)}")
    mods = "_".join(_modalities(args.stage, args.modality))
    emit(cfg.output_dir, f"extract_stage{args.stage}_{mods}", "extract", {"stage": args.stage, "runs": rows},
         "\n".join(lines))
    return 0


def _evaluate_seeds(cfg, m, ensembling, split):
    per_seed = {}
    for seed in cfg.seeds:
        per_seed[seed] = evaluate_workspace(_ws(cfg, seed), m, ensembling, split,
                                            cfg.ensemble.get("grid_step", 0.1))
    keys = sorted(per_seed[cfg.seeds[0]]["stages"][split])
    agg = {k: mean_std([per_seed[s]["stages"][split][k] for s in cfg.seeds]) for k in keys}
    if ensembling:
        agg["ensemble"] = mean_std([per_seed[s]["ensemble_f1"] for s in cfg.seeds])
    return per_seed, agg


def cmd_evaluate(args, cfg):
    cfg.require("data", "output_dir")
    m = _manifest(cfg)
    split = args.split or cfg.ensemble.get("split", "test")
    per_seed, agg = _evaluate_seeds(cfg, m, args.ensembling, split)
    lines = [f"{split} weighted F1 over seeds {cfg.seeds} (mean ± std):"]
    lines += [f"  {k:<9} {_fmt(v)}" for k, v in agg.items()]
    if args.ensembling:
        w = per_seed[cfg.seeds[0]]["weights"]
        lines.append(f"  weights (seed {cfg.seeds[0]}): a12={w['alpha_a_12']} t12={w['alpha_t_12']} "
                     f"c={w['alpha_c']:.2f} a23={w['alpha_a_23']:.2f} t23={w['alpha_t_23']:.2f}")
    name = "evaluate_ensemble" if args.ensembling else "evaluate_plain"
    emit(cfg.output_dir, name, "evaluate", {"ensembling": args.ensembling, "split": split,
                                            "per_seed": per_seed, "aggregate": agg}, "\n".join(lines))
    return 0


def cmd_run(args, cfg):
    """Whole curriculum for every seed, then evaluation."""
    cfg.require("data", "output_dir")
    m = _manifest(cfg)
    for seed in cfg.seeds:
        ws = _ws(cfg, seed)
        for mod in MODALITIES:
            run_train(ws, cfg.stage_config(1, seed), m, 1, mod)
            run_extract(ws, m, 1, mod)
        for mod in MODALITIES:
            run_train(ws, cfg.stage_config(2, seed), m, 2, mod)
            run_extract(ws, m, 2, mod)
        run_train(ws, cfg.stage_config(3, seed), m, 3)
        run_extract(ws, m, 3, "fused")
        if args.nonhierarchical:
            run_train(ws, cfg.stage_config("joint23", seed), m, "joint23")
            run_extract(ws, m, "joint23", "fused")
    split = cfg.ensemble.get("split", "test")
    per_seed, agg = _evaluate_seeds(cfg, m, True, split)
    lines = [f"{split} weighted F1 over seeds {cfg.seeds} (mean ± std):"]
    lines += [f"  {k:<9} {_fmt(v)}" for k, v in agg.items()]
    emit(cfg.output_dir, "run", "run", {"config": cfg.to_dict(), "split": split, "per_seed": per_seed,
                                         "aggregate": agg}, "\n".join(lines))
    return 0


def _sweep_training(cfg, m, param, grid, stage, modality):
    rows = []
    for value in grid:
        val, test = [], []
        for seed in cfg.seeds:
            tc = cfg.stage_config(stage, seed)
            tc = tc.replace(loss={**asdict(tc.loss), param: value})
            ws = _ws(cfg, seed)
            if stage == 1:
                ck = train_stage1(tc, m, modality)
                store = extract_embeddings(ck, m, 1, modality)
            elif stage == 2:
                up = ws.load_store(1, modality)
                ck = train_stage2(tc, ws.checkpoint_path(1, modality), up, m, modality)
                store = extract_embeddings(ck, m, 2, modality, up)
            else:
                ups = {mm: ws.load_store(2, mm) for mm in MODALITIES}
                ck = train_stage3(tc, {mm: ws.checkpoint_path(2, mm) for mm in MODALITIES}, ups, m)
                store = extract_embeddings(ck, m, 3, "fused", ups)
            val.append(store_f1(store, m, "val"))
            test.append(store_f1(store, m, "test"))
        rows.append({param: value, "val_f1": mean_std(val), "test_f1": mean_std(test)})
    return rows


def _sweep_alpha(cfg, m, grid):
    if any(not 0.0 <= a <= 1.0 for a in grid):
        raise ConfigError("alpha grid values must lie in [0, 1]")
    rows = []
    per = {}
    for seed in cfg.seeds:
        preds = collect_predictions(_ws(cfg, seed), m)
        preds.require("a1", "t1", "a2", "t2")
        per[seed] = preds
    for a in grid:
        row = {"alpha": a}
        for split in ("val", "test"):
            ids = m.utterance_ids(split)
            y = np.array([m.label(u) for u in ids])
            for mod, k2, k1 in (("audio", "a2", "a1"), ("text", "t2", "t1")):
                vals = []
                for seed in cfg.seeds:
                    P = per[seed].subset(ids).probs
                    vals.append(weighted_f1(argmax_labels(ensemble_stage2(P[k2], P[k1], a)), y, m.num_classes))
                row[f"{split}_{mod}_f1"] = mean_std(vals)
        rows.append(row)
    return rows


def cmd_sweep(args, cfg):
    cfg.require("data", "output_dir")
    m = _manifest(cfg)
    if args.grid:
        grid = _float_list(args.grid)
    elif args.param == "alpha":
        grid = alpha_grid(cfg.ensemble.get("grid_step", 0.1))
    else:
        raise ConfigError("--grid is required for beta/tau sweeps")
    if not grid:
        raise ConfigError("empty grid")
    if args.param == "alpha":
        rows = _sweep_alpha(cfg, m, grid)
        lines = ["alpha   val-audio  val-text   test-audio test-text"]
        lines += [f"{r['alpha']:<7.3f} {r['val_audio_f1']['mean']:.4f}     {r['val_text_f1']['mean']:.4f}     "
                  f"{r['test_audio_f1']['mean']:.4f}     {r['test_text_f1']['mean']:.4f}" for r in rows]
    else:
        stage = STAGE_NAMES[args.stage]
        mod = "fused" if stage == 3 else (args.modality if args.modality in MODALITIES else "audio")
        for v in grid:
            try:
                LossConfig(**{args.param: v})
            except HcamError as e:
                raise ConfigError(f"{args.param}={v}: {e}") from None
        rows = _sweep_training(cfg, m, args.param, grid, stage, mod)
        lines = [f"{args.param} sweep, stage {args.stage} {mod} (mean ± std over seeds {cfg.seeds})",
                 f"{args.param:<8} val F1            test F1"]
        lines += [f"{r[args.param]:<8.4g} {_fmt(r['val_f1'])}  {_fmt(r['test_f1'])}" for r in rows]
    emit(cfg.output_dir, f"sweep_{args.param}", "sweep", {"param": args.param, "grid": grid, "rows": rows},
         "\n".join(lines))
    return 0


def cmd_gradcheck(args, cfg):
    from .numcore import kernel_backend
    from .verify import run_suite
    results = run_suite(args.seed or 0)
    ok = all(r["passed"] for r in results)
    lines = [f"gradient checks (fp64, central differences, kernel backend {kernel_backend()}):"]
    lines += [f"  {'PASS' if r['passed'] else 'FAIL'}  {r['name']:<24} max rel err {r['max_rel_error']:.2e} "
              f"(tol {r['tolerance']:.0e}, {r['n_checked']} entries)" for r in results]
    lines.append(f"{sum(r['passed'] for r in results)}/{len(results)} passed")
    for r in results:
        r.pop("seconds")
    emit(args.out, "gradcheck", "gradcheck", {"passed": ok, "checks": results}, "\n".join(lines))
    return 0 if ok else 3


def cmd_ablate(args, cfg):
    """Paired stage-2 runs with and without the self-attention block."""
    cfg.require("data", "output_dir")
    if args.self_attention != "off":
        raise ConfigError("only '--self-attention off' is supported")
    m = _manifest(cfg)
    rows, lines = [], ["self-attention ablation, stage 2 test weighted F1 (with / without / delta):"]
    for seed in cfg.seeds:
        ws = _ws(cfg, seed)
        for mod in MODALITIES:
            if not ws.has_store(1, mod):
                run_train(ws, cfg.stage_config(1, seed), m, 1, mod)
                run_extract(ws, m, 1, mod)
            up = ws.load_store(1, mod)
            res = {}
            for flag in (True, False):
                tc = cfg.stage_config(2, seed).replace(self_attention=flag)
                ck = train_stage2(tc, ws.checkpoint_path(1, mod), up, m, mod)
                store = extract_embeddings(ck, m, 2, mod, up)
                res[flag] = {"val_f1": store_f1(store, m, "val"), "test_f1": store_f1(store, m, "test"),
                             "checkpoint_hash": ck.content_hash}
            delta = res[True]["test_f1"] - res[False]["test_f1"]
            rows.append({"seed": seed, "modality": mod, "with_attention": res[True],
                         "without_attention": res[False], "delta_test_f1": delta})
            lines.append(f"  seed {seed} {mod:<5} {res[True]['test_f1']:.4f} / {res[False]['test_f1']:.4f} / "
                         f"{delta:+.4f}")
    deltas = mean_std([r["delta_test_f1"] for r in rows])
    lines.append(f"mean delta {_fmt(deltas)} (positive: self-attention helps)")
    emit(cfg.output_dir, "ablate_self_attention", "ablate", {"rows": rows, "delta": deltas}, "\n".join(lines))
    return 0


# -- parser ---------------------------------------------------------------
class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _common(p, data=True):
    p.add_argument("--config", help="JSON experiment config")
    if data:
        p.add_argument("--data", help="manifest file or dataset directory")
        p.add_argument("--work", help="output / workspace directory")
    p.add_argument("--seeds", help="comma-separated seed list (overrides config)")
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--d-model", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--clip-norm", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--grid-step", type=float)


def build_parser():
    ap = _Parser(prog="hcam", description="Hierarchical cross-attention ERC toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--regime", choices=["a", "b", "c", "bc"])
    p.add_argument("--num-conversations", type=int)
    p.add_argument("--length", help="L or MIN,MAX")
    p.add_argument("--num-classes", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--stay-prob", type=float)
    p.add_argument("--audio-flip", type=float)
    p.add_argument("--text-flip", type=float)
    p.add_argument("--d-audio", type=int)
    p.add_argument("--d-text", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="train one stage")
    _common(p)
    p.add_argument("--stage", required=True, choices=list(STAGE_NAMES))
    p.add_argument("--modality", choices=["audio", "text", "both"], default="both")

    p = sub.add_parser("extract", help="extract a trained stage's embedding store")
    _common(p)
    p.add_argument("--stage", required=True, choices=list(STAGE_NAMES))
    p.add_argument("--modality", choices=["audio", "text", "fused", "both"], default="both")

    p = sub.add_parser("evaluate", help="per-stage and ensembled weighted F1")
    _common(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--with-ensembling", dest="ensembling", action="store_true", default=True)
    g.add_argument("--no-ensembling", dest="ensembling", action="store_false")
    p.add_argument("--split", choices=["val", "test"])

    p = sub.add_parser("run", help="full curriculum + evaluation for every seed")
    _common(p)
    p.add_argument("--nonhierarchical", action="store_true", help="also train the joint stage II+III baseline")

    p = sub.add_parser("sweep", help="sweep beta, tau or the stage-2 ensembling alpha")
    _common(p)
    p.add_argument("--param", required=True, choices=["beta", "tau", "alpha"])
    p.add_argument("--grid", help="comma-separated values")
    p.add_argument("--stage", choices=["1", "2", "3"], default="1")
    p.add_argument("--modality", choices=["audio", "text"], default="audio")

    p = sub.add_parser("gradcheck", help="finite-difference check of every differentiable block")
    p.add_argument("--out", default="gradcheck-results")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("ablate", help="self-attention ablation of the contextual GRU")
    _common(p)
    p.add_argument("--self-attention", required=True, choices=["off"])
    return ap


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "extract": cmd_extract, "evaluate": cmd_evaluate,
            "run": cmd_run, "sweep": cmd_sweep, "gradcheck": cmd_gradcheck, "ablate": cmd_ablate}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command is None:
            raise ConfigError("a command is required (try --help)")
        cfg = ExperimentConfig.load(getattr(args, "config", None))
        cfg.apply_flags(args)
        return COMMANDS[args.command](args, cfg)
    except HcamError as e:
        print(f"hcam: error: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except SystemExit as e:   # --help
        return int(e.code or 0)


if __name__ == "__main__":
    sys.exit(main())
