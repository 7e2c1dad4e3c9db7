"""Acceptance criteria 1-9, each at its stated tolerance.

Every test records one PASS/FAIL line (see ``acceptance_log``); the lines are
repeated in the pytest terminal summary. Learning experiments run at desk
scale: d_model 32, Adam lr 3e-3, batch 8 conversations/utterances.
"""
import json
import time

import numpy as np
import pytest

from acceptance_log import record
from oracles import sup_con_bruteforce

from hcam.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from hcam.cli import ExperimentConfig, main
from hcam.dataio import (EmbeddingStore, SyntheticSpec, Utterance, bayes_accuracies,
                         generate_synthetic, load_manifest, read_embedding_file,
                         write_embedding_file, write_manifest)
from hcam.dataio.embfile import HEADER, MAGIC
from hcam.errors import HcamError
from hcam.inference import STAGE_KEYS, argmax_labels, read_predictions
from hcam.losses import LossConfig, combined_loss, cross_entropy, sup_con_loss
from hcam.pipeline import (TrainConfig, Workspace, evaluate_workspace, extract_embeddings,
                           run_extract, run_train, store_f1, train_stage1, train_stage2)
from hcam.verify import run_suite

DESK = {"d_model": 32, "learning_rate": 3e-3, "batch_size": 8}


def desk_configs(seed, epochs, patience, **extra):
    """Per-stage TrainConfigs resolved the same way the CLI resolves them."""
    cfg = ExperimentConfig({"train": {**DESK, "max_epochs": epochs, "patience": patience, **extra}})
    return {s: cfg.stage_config(s, seed) for s in (1, 2, 3, "joint23")}


def hierarchy(ws, m, configs, nonhierarchical=False, modalities=("audio", "text")):
    for mod in modalities:
        run_train(ws, configs[1], m, 1, mod)
        run_extract(ws, m, 1, mod)
    for mod in modalities:
        run_train(ws, configs[2], m, 2, mod)
        run_extract(ws, m, 2, mod)
    if len(modalities) == 2:
        run_train(ws, configs[3], m, 3)
        run_extract(ws, m, 3, "fused")
    if nonhierarchical:
        run_train(ws, configs["joint23"], m, "joint23")
        run_extract(ws, m, "joint23", "fused")
    return ws


def accuracy(store, m, split):
    ids = m.utterance_ids(split)
    y = np.array([m.label(u) for u in ids])
    return float(np.mean(argmax_labels(store.gather_probs(ids)) == y))


# -- shared experiments -------------------------------------------------------
@pytest.fixture(scope="module")
def regime_b(tmp_path_factory):
    root = tmp_path_factory.mktemp("regime_b")
    spec = SyntheticSpec(regime="b", num_conversations=200, length=20, num_classes=4, seed=0)
    m = load_manifest(generate_synthetic(spec, root / "data"))
    t0 = time.perf_counter()
    ws = hierarchy(Workspace(root / "ws"), m, desk_configs(0, epochs=80, patience=30))
    return ws, m, bayes_accuracies(spec), time.perf_counter() - t0


@pytest.fixture(scope="module")
def regime_c(tmp_path_factory):
    root = tmp_path_factory.mktemp("regime_c")
    m = load_manifest(generate_synthetic(SyntheticSpec(regime="c", num_conversations=200, length=20, seed=0),
                                         root / "data"))
    t0 = time.perf_counter()
    ws = hierarchy(Workspace(root / "ws"), m, desk_configs(0, epochs=60, patience=20))
    return ws, m, time.perf_counter() - t0


@pytest.fixture(scope="module")
def regime_bc(tmp_path_factory):
    root = tmp_path_factory.mktemp("regime_bc")
    m = load_manifest(generate_synthetic(SyntheticSpec(regime="bc", num_conversations=200, length=20, seed=0),
                                         root / "data"))
    runs = {}
    for seed in (0, 1, 2):
        runs[seed] = hierarchy(Workspace(root / f"seed{seed}"), m, desk_configs(seed, epochs=60, patience=20),
                               nonhierarchical=True)
    return runs, m


# -- 1 -----------------------------------------------------------------------
def test_criterion_1_gradient_correctness():
    t0 = time.perf_counter()
    results = run_suite(seed=0)
    elapsed = time.perf_counter() - t0
    worst = max(results, key=lambda r: r["max_rel_error"])
    ok = all(r["passed"] and r["max_rel_error"] < 1e-4 for r in results) and elapsed < 120
    record(1, "finite-difference checks at fp64", ok,
           f"{sum(r['passed'] for r in results)}/{len(results)} blocks, worst {worst['name']} "
           f"{worst['max_rel_error']:.2e} < 1e-4, {elapsed:.1f}s < 120s")
    assert ok


# -- 2 -----------------------------------------------------------------------
def test_criterion_2_supcon_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(1000):
        B, C, F = int(rng.integers(2, 9)), int(rng.integers(1, 5)), int(rng.integers(2, 9))
        x = rng.standard_normal((B, F))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        y = rng.integers(0, C, B)
        tau = float(rng.choice([0.05, 0.1, 0.5, 1.0, 2.0]))
        for excl in (True, False):
            diff = abs(sup_con_loss(x, y, tau, excl).item() - sup_con_bruteforce(x, y, tau, excl))
            worst = max(worst, diff)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 30
    record(2, "sup-con vs brute-force enumeration", ok,
           f"1000 batches x 2 variants, max |diff| {worst:.1e} <= 1e-8, {elapsed:.1f}s < 30s")
    assert ok


# -- 3 -----------------------------------------------------------------------
def test_criterion_3_loss_endpoints():
    rng = np.random.default_rng(3)
    bad = 0
    for _ in range(100):
        B, C, F = int(rng.integers(2, 9)), int(rng.integers(2, 5)), int(rng.integers(2, 6))
        z = rng.standard_normal((B, C)) * 2
        x = rng.standard_normal((B, F))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        y = rng.integers(0, C, B)
        tau = float(rng.uniform(0.05, 1.0))
        hi = combined_loss(z, x, y, LossConfig(beta=1.0, tau=tau)).item()
        lo = combined_loss(z, x, y, LossConfig(beta=0.0, tau=tau)).item()
        bad += hi != cross_entropy(z, y).item()
        bad += lo != sup_con_loss(x, y, tau).item()
    record(3, "combined loss endpoints are exact", bad == 0, f"100 fixtures, {bad} inexact endpoints")
    assert bad == 0


# -- 4 -----------------------------------------------------------------------
def test_criterion_4_stagewise_gain_regime_b(regime_b):
    ws, m, bayes, elapsed = regime_b
    parts, ok = [], elapsed < 600
    for mod in ("audio", "text"):
        f1_1 = store_f1(ws.load_store(1, mod), m, "val")
        f1_2 = store_f1(ws.load_store(2, mod), m, "val")
        acc_1 = accuracy(ws.load_store(1, mod), m, "test")
        bound = bayes[f"{mod}_single"]
        ok &= f1_2 >= f1_1 + 0.10 and acc_1 <= bound + 0.03
        parts.append(f"{mod}: val F1 {f1_1:.3f} -> {f1_2:.3f} (need +0.10), "
                     f"stage-1 test acc {acc_1:.3f} <= Bayes {bound:.3f} + 0.03")
    record(4, "stage-2 gain on context-dependent data", ok, "; ".join(parts) + f"; {elapsed:.0f}s < 600s")
    assert ok


# -- 5 -----------------------------------------------------------------------
def test_criterion_5_fusion_gain_regime_c(regime_c):
    ws, m, elapsed = regime_c
    val = evaluate_workspace(ws, m, ensembling=False, split="test")["stages"]["val"]
    best_single = max(val[k] for k in ("a1", "t1", "a2", "t2"))
    ok = val["c"] >= best_single + 0.05 and elapsed < 600
    record(5, "fusion gain on complementary modalities", ok,
           f"fused val F1 {val['c']:.3f} >= best single {best_single:.3f} + 0.05; {elapsed:.0f}s < 600s")
    assert ok


def test_zeroing_one_modality_degrades_fusion(regime_c):
    # supplementary: not a numbered criterion
    ws, m, _ = regime_c
    stores = {k: ws.load_store(2, k) for k in ("audio", "text")}
    full = store_f1(ws.load_store(3, "fused"), m, "val")
    for dead in ("audio", "text"):
        s = stores[dead]
        blank = EmbeddingStore(s.ids, np.zeros_like(s.embeddings), s.probs, s.meta)
        fused = extract_embeddings(ws.checkpoint_path(3, "fused"), m, 3, "fused", {**stores, dead: blank})
        assert store_f1(fused, m, "val") < full - 0.2


# -- 6 -----------------------------------------------------------------------
def test_criterion_6_hierarchy_vs_joint_regime_bc(regime_bc):
    runs, m = regime_bc
    parts, ok = [], True
    for seed, ws in runs.items():
        st = evaluate_workspace(ws, m, ensembling=False, split="test")["stages"]["test"]
        ok &= st["c"] >= st["joint23"] - 0.02
        parts.append(f"seed {seed}: {st['c']:.3f} vs {st['joint23']:.3f}")
    record(6, "hierarchical >= non-hierarchical - 0.02 (test F1)", ok, ", ".join(parts))
    assert ok


# -- 7 -----------------------------------------------------------------------
def test_criterion_7_ensembling_never_hurts_on_val(regime_c, regime_bc):
    workspaces = [("c", regime_c[0], regime_c[1])] + [(f"bc/{s}", ws, regime_bc[1]) for s, ws in regime_bc[0].items()]
    parts, ok = [], True
    for name, ws, m in workspaces:
        out = evaluate_workspace(ws, m, ensembling=True, split="test", grid_step=0.1)
        best = max(out["stages"]["val"][k] for k in STAGE_KEYS)
        ok &= out["ensemble_val_f1"] >= best
        parts.append(f"{name}: {out['ensemble_val_f1']:.3f} >= {best:.3f}")
    record(7, "ensemble val F1 >= every single stage", ok, ", ".join(parts))
    assert ok


# -- 8 -----------------------------------------------------------------------
def test_criterion_8_self_attention_ablation(tmp_path, monkeypatch):
    data = tmp_path / "data"
    assert main(["synth", "--out", str(data), "--regime", "b", "--num-conversations", "40",
                 "--length", "40", "--d-audio", "8", "--d-text", "8", "--seed", "8"]) == 0
    flags = ["--data", str(data), "--work", "out", "--d-model", "16", "--lr", "3e-3", "--batch-size", "8",
             "--epochs", "15", "--patience", "10"]
    outputs = []
    for run in ("first", "second"):
        (tmp_path / run).mkdir()
        monkeypatch.chdir(tmp_path / run)
        rc = main(["ablate", "--self-attention", "off", *flags])
        assert rc == 0
        outputs.append(((tmp_path / run / "out" / "ablate_self_attention.json").read_bytes(),
                        (tmp_path / run / "out" / "ablate_self_attention.txt").read_bytes()))
    doc = json.loads(outputs[0][0])
    paired = {r["modality"] for r in doc["rows"]} == {"audio", "text"} and all(
        "with_attention" in r and "without_attention" in r for r in doc["rows"])
    same = outputs[0] == outputs[1]
    ok = paired and same
    deltas = ", ".join(f"{r['modality']} {r['delta_test_f1']:+.3f}" for r in doc["rows"])
    record(8, "self-attention ablation is paired and deterministic", ok,
           f"L=40, deltas (with - without) {deltas}; rerun identical: {same}")
    assert ok


# -- 9 -----------------------------------------------------------------------
def _malformed_fixtures(d):
    """(label, callable) pairs that must each raise a named HcamError subclass."""
    d.mkdir()
    write_embedding_file(d / "ok.emb", np.ones((2, 3)))
    good = (d / "ok.emb").read_bytes()

    def emb(name, data):
        (d / name).write_bytes(data)
        return lambda: read_embedding_file(d / name)

    def manifest(name, rows, header=None, num_classes=3):
        sub = d / name
        sub.mkdir()
        recs = []
        for conv, uid, order, label in rows:
            write_embedding_file(sub / f"{uid}.emb", np.ones((2, 3)))
            recs.append(Utterance(conv, uid, order, "train", label, f"{uid}.emb", f"{uid}.emb"))
        write_manifest(sub / "m.tsv", recs, num_classes)
        if header:
            text = (sub / "m.tsv").read_text().splitlines()
            (sub / "m.tsv").write_text("\n".join([header] + text[1:]) + "\n")
        return lambda: load_manifest(sub / "m.tsv")

    manifest("miss", [("c", "u0", 0, 0)])
    (d / "miss" / "u0.emb").unlink()
    missing = lambda: load_manifest(d / "miss" / "m.tsv")

    ck = Checkpoint(1, "audio", {"w": np.ones((2, 2), np.float32)}, {}, {"d_model": 2}, {})
    save_checkpoint(ck, d / "ok.hcck")
    raw = bytearray((d / "ok.hcck").read_bytes())
    raw[40] ^= 0xFF
    (d / "flip.hcck").write_bytes(bytes(raw))
    (d / "short.hcck").write_bytes(bytes(raw[:20]))
    (d / "preds.tsv").write_text("#hcam-predictions\tversion=1\tnum_classes=2\nutterance_id\tstage\tprobs\nu1\tz9\t0.5,0.5\n")
    return [
        ("embedding truncated", emb("trunc.emb", good[:-3])),
        ("embedding bad magic", emb("magic.emb", b"XXXX" + good[4:])),
        ("embedding bad version", emb("ver.emb", HEADER.pack(MAGIC, 9, 1, 2, 3) + good[16:])),
        ("embedding NaN payload", emb("nan.emb", HEADER.pack(MAGIC, 1, 1, 1, 1) + np.float32(np.nan).tobytes())),
        ("embedding trailing bytes", emb("trail.emb", good + b"\0")),
        ("manifest order gap", manifest("gap", [("c", "u0", 0, 0), ("c", "u2", 2, 0)])),
        ("manifest duplicate order", manifest("dup", [("c", "u0", 0, 0), ("c", "u1", 0, 0)])),
        ("manifest label = C", manifest("lab", [("c", "u0", 0, 3)])),
        ("manifest bad header", manifest("hdr", [("c", "u0", 0, 0)], header="#nope")),
        ("manifest missing embedding", missing),
        ("checkpoint flipped byte", lambda: load_checkpoint(d / "flip.hcck")),
        ("checkpoint truncated", lambda: load_checkpoint(d / "short.hcck")),
        ("checkpoint stage mismatch", lambda: load_checkpoint(d / "ok.hcck", stage=3)),
        ("missing store", lambda: EmbeddingStore.load(d / "nostore")),
        ("prediction file bad stage", lambda: read_predictions(d / "preds.tsv")),
        ("sup-con unnormalized rows", lambda: sup_con_loss(np.ones((2, 2)), [0, 0])),
    ]


def test_criterion_9_determinism_and_formats(tmp_path, monkeypatch):
    problems = []
    # bitwise-identical checkpoints and stores for identical (config, seed)
    m = load_manifest(generate_synthetic(SyntheticSpec(regime="b", num_conversations=20, length=6, d_audio=6,
                                                       d_text=6, seed=9), tmp_path / "data"))
    cfg = TrainConfig(d_model=8, learning_rate=3e-3, batch_size=8, max_epochs=3, seed=4)
    pair = []
    for run in ("a", "b"):
        c1 = train_stage1(cfg, m, "text")
        p1 = save_checkpoint(c1, tmp_path / run / "s1.hcck")
        s1 = extract_embeddings(p1, m, 1, "text")
        c2 = train_stage2(cfg, p1, s1, m, "text")
        pair.append((c1.to_bytes(), c2.to_bytes(), s1.embeddings.tobytes()))
    if pair[0] != pair[1]:
        problems.append("training not bitwise reproducible")

    # result files from the CLI, two independent runs
    docs = []
    for run in ("x", "y"):
        (tmp_path / run).mkdir(exist_ok=True)
        monkeypatch.chdir(tmp_path / run)
        assert main(["run", "--data", str(tmp_path / "data"), "--work", "out", "--epochs", "2",
                     "--d-model", "8", "--batch-size", "8", "--lr", "3e-3"]) == 0
        docs.append([(tmp_path / run / "out" / f).read_bytes() for f in ("run.json", "run.txt")])
    if docs[0] != docs[1]:
        problems.append("CLI result files differ between identical runs")

    # format round-trips
    rng = np.random.default_rng(9)
    arr = rng.standard_normal((7, 16)).astype(np.float32)
    write_embedding_file(tmp_path / "r.emb", arr)
    write_embedding_file(tmp_path / "r2.emb", read_embedding_file(tmp_path / "r.emb"))
    if (tmp_path / "r.emb").read_bytes() != (tmp_path / "r2.emb").read_bytes():
        problems.append("embedding round-trip")
    save_checkpoint(load_checkpoint(p1), tmp_path / "again.hcck")
    if p1.read_bytes() != (tmp_path / "again.hcck").read_bytes():
        problems.append("checkpoint round-trip")

    # malformed inputs
    named = []
    for label, fn in _malformed_fixtures(tmp_path / "bad"):
        try:
            fn()
            problems.append(f"{label}: no error")
        except HcamError as e:
            named.append(type(e).__name__)
        except Exception as e:  # anything unnamed is a failure
            problems.append(f"{label}: unnamed {type(e).__name__}")
    ok = not problems
    record(9, "determinism, round-trips, malformed inputs", ok,
           (f"checkpoints/stores/result files bitwise stable, round-trips exact, "
            f"{len(named)} malformed fixtures -> {len(set(named))} named error types") if ok else "; ".join(problems))
    assert ok, problems
