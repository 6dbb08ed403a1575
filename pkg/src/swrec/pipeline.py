"""End-to-end pipeline: dataset -> group -> train -> eval -> diagnose.

Each stage writes its outputs into a cache directory named by the sha256
of the stage's configuration plus its upstream stage keys, so reruns with
unchanged inputs are skipped (content-based, not timestamp-based).  A run
manifest records the full config snapshot, stage keys, cache hits,
artifact paths, the dataset fingerprint and wall-clock timings.
"""

from __future__ import annotations

import copy
import hashlib
import json
import time
from pathlib import Path

import numpy as np

from . import baselines, diagnostics, evaluation, grouping, ingest
from . import report as report_mod
from . import storage, structure, swdae, synth
from .errors import ConfigurationError

TOOL_VERSION = "0.1.0"

DEFAULT_CONFIG = {
    "dataset": {
        "kind": "synth",
        "n_users": 2000,
        "m_items": 300,
        "n_blocks": 3,
        "within_block_p": 0.3,
        "cross_block_p": 0.01,
        "overlap_items_per_pair": 0,
        "popularity_exponent": 0.0,
        "seed": 1,
        "n_val": 200,
        "n_test": 200,
        "fold_in_fraction": 0.8,
        "split_seed": 1,
    },
    "grouping": {
        "algo": "laplacian",
        "k": 30,
        "r": 3,
        "f": 10,
        "kmeans_max_iters": 100,
        "normalization": "row_sum",
        "seed": 7,
    },
    "model": {
        "variant": "sw",  # sw | fc | fc_reg | prune
        "loss_kind": "bernoulli",
        "init_seed": 0,
        "fc_k": None,  # fc variants; defaults to grouping.k
        "lambda1": 0.001,  # fc_reg
        "keep_fraction": 0.1,  # prune
        "retrain_epochs": 100,  # prune
    },
    "training": {
        "epochs": 100,
        "batch_size": 500,
        "learning_rate": 0.001,
        "seed": 0,
        "input_dropout_p": 0.6,
        "hidden_dropout_p": 0.2,
        "corruption_seed": 0,
        "track_norms": False,
    },
    "eval": {
        "cutoffs": [20, 50, 100],
        "tie_seed": 0,
        "cold_start_mode": None,  # count_at_most | bottom_quantile
        "cold_start_value": None,
    },
}


def merge_config(overrides: dict) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    for section, values in (overrides or {}).items():
        if section not in config:
            raise ConfigurationError(f"unknown config section {section!r}")
        if not isinstance(values, dict):
            raise ConfigurationError(f"section {section!r} must be a mapping")
        for key, val in values.items():
            # the dataset section carries kind-specific keys (ingest paths etc.)
            if section != "dataset" and key not in config[section]:
                raise ConfigurationError(f"unknown key {section}.{key}")
            config[section][key] = val
    return config


def _key(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _split_users(held_out, user_set) -> list:
    chosen = set(int(u) for u in user_set)
    return [hu for hu in held_out if hu.user in chosen]


def build_dataset(cfg: dict, out_dir: Path):
    """Materialize the dataset directory (synthetic or ingested)."""
    kind = cfg["kind"]
    if kind == "synth":
        spec = synth.PlantedSpec(
            n_users=cfg["n_users"],
            m_items=cfg["m_items"],
            n_blocks=cfg["n_blocks"],
            within_block_p=cfg["within_block_p"],
            cross_block_p=cfg["cross_block_p"],
            overlap_items_per_pair=cfg.get("overlap_items_per_pair", 0),
            popularity_exponent=cfg.get("popularity_exponent", 0.0),
            seed=cfg["seed"],
        )
        matrix, truth = synth.generate(spec)
    elif kind == "ingest":
        events = ingest.load_events(
            cfg["input"], cfg.get("format", "csv"), cfg.get("threshold", 0.0)
        )
        matrix = ingest.build_matrix(
            events,
            min_user_events=cfg.get("min_user_events", 0),
            min_item_users=cfg.get("min_item_users", 0),
        )
        truth = None
    else:
        raise ConfigurationError(f"unknown dataset kind {kind!r}")
    split, held_out = ingest.split_users(
        matrix,
        n_val=cfg["n_val"],
        n_test=cfg["n_test"],
        fold_in_fraction=cfg.get("fold_in_fraction", 0.8),
        seed=cfg.get("split_seed", 0),
    )
    storage.save_dataset(out_dir, matrix, split, held_out, truth=truth)
    return matrix, split, held_out


def _train_model(config: dict, matrix, split, clusters):
    mcfg, tcfg = config["model"], config["training"]
    train_rows = [matrix.rows[u] for u in split.train_users]
    corruption = swdae.CorruptionConfig(
        input_dropout_p=tcfg["input_dropout_p"],
        hidden_dropout_p=tcfg["hidden_dropout_p"],
        seed=tcfg["corruption_seed"],
    )
    train_cfg = swdae.TrainConfig(
        batch_size=tcfg["batch_size"],
        epochs=tcfg["epochs"],
        learning_rate=tcfg["learning_rate"],
        seed=tcfg["seed"],
    )
    norm_series: list = []
    callback = None
    if tcfg.get("track_norms"):
        callback = diagnostics.tracking_callback(len(train_rows), norm_series)

    variant = mcfg["variant"]
    fc_k = mcfg.get("fc_k") or config["grouping"]["k"]
    if variant == "sw":
        mask = structure.build_mask(clusters, matrix.m)
        model = swdae.init_model(
            mask, seed=mcfg["init_seed"], loss_kind=mcfg["loss_kind"]
        )
        log = swdae.train(model, train_rows, corruption, train_cfg, callback=callback)
    elif variant == "fc":
        model, log = baselines.train_fc(
            matrix.m, fc_k, train_rows, corruption, train_cfg,
            seed=mcfg["init_seed"], loss_kind=mcfg["loss_kind"], callback=callback,
        )
    elif variant == "fc_reg":
        model, log = baselines.train_fc_reg(
            matrix.m, fc_k, train_rows, corruption, train_cfg,
            baselines.RegConfig(lambda1=mcfg["lambda1"]),
            seed=mcfg["init_seed"], loss_kind=mcfg["loss_kind"], callback=callback,
        )
    elif variant == "prune":
        fc, _ = baselines.train_fc(
            matrix.m, fc_k, train_rows, corruption, train_cfg,
            seed=mcfg["init_seed"], loss_kind=mcfg["loss_kind"],
        )
        model, log = baselines.prune_and_retrain(
            fc,
            baselines.PruneConfig(
                keep_fraction=mcfg["keep_fraction"],
                retrain_epochs=mcfg["retrain_epochs"],
            ),
            train_rows, corruption, train_cfg,
        )
    else:
        raise ConfigurationError(f"unknown model variant {variant!r}")
    return model, log, norm_series


def run_pipeline(overrides: dict, out_dir) -> dict:
    """Execute all stages with caching; returns the manifest dict."""
    config = merge_config(overrides)
    out_dir = Path(out_dir)
    cache = out_dir / "cache"
    cache.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool_version": TOOL_VERSION,
        "config": config,
        "stages": {},
        "artifacts": {},
        "timings_sec": {},
    }

    def stage(name, key, outputs, compute):
        stage_dir = cache / f"{name}-{key}"
        done = stage_dir / ".done"
        hit = done.exists()
        if not hit:
            stage_dir.mkdir(parents=True, exist_ok=True)
            start = time.perf_counter()
            compute(stage_dir)
            manifest["timings_sec"][name] = time.perf_counter() - start
            done.write_text("ok\n")
        else:
            manifest["timings_sec"][name] = 0.0
        manifest["stages"][name] = {"key": key, "cache_hit": hit}
        for label, rel in outputs.items():
            manifest["artifacts"][label] = str(stage_dir / rel)
        return stage_dir

    # dataset
    ds_key = _key("dataset", config["dataset"])
    ds_dir = stage(
        "dataset",
        ds_key,
        {"dataset": "."},
        lambda d: build_dataset(config["dataset"], d),
    )
    matrix, split, held_out = storage.load_dataset(ds_dir)
    manifest["dataset_fingerprint"] = _file_sha256(ds_dir / "interactions.bin")

    # grouping (only the sw variant consumes clusters)
    clusters = None
    needs_group = config["model"]["variant"] == "sw"
    if needs_group:
        g = config["grouping"]
        group_key = _key("group", g, ds_key)

        def compute_group(d):
            cfg = grouping.GroupingConfig(
                k=g["k"], r=g["r"], f=g["f"],
                kmeans_max_iters=g["kmeans_max_iters"],
                seed=g["seed"], normalization=g["normalization"],
            )
            cl = grouping.item_grouping(matrix, cfg, algo=g["algo"])
            storage.write_json(
                d / "clusters.json",
                {
                    "k": cl.k,
                    "inertia": cl.inertia,
                    "assignments": cl.assignments.tolist(),
                    "config": dict(g),
                },
            )

        group_dir = stage("group", group_key, {"clusters": "clusters.json"},
                          compute_group)
        payload = json.loads((group_dir / "clusters.json").read_text())
        clusters = grouping.OverlappingClusters(
            k=payload["k"],
            assignments=np.array(payload["assignments"], dtype=np.int32),
            centroids=np.zeros((payload["k"], config["grouping"]["f"])),
            inertia=payload["inertia"],
        )
    else:
        group_key = "skipped"

    # training
    train_key = _key("train", config["model"], config["training"], group_key, ds_key)

    def compute_train(d):
        model, log, norm_series = _train_model(config, matrix, split, clusters)
        storage.save_model(d / "model.bin", model)
        storage.write_json(
            d / "train_log.json", {"header": log.header, "epochs": log.epochs}
        )
        if norm_series:
            entries = [
                {
                    "epoch": r.epoch,
                    "encoder_spectral_norm": r.layers[0].spectral_norm,
                    "generalization_bound": r.bound,
                }
                for r in norm_series
            ]
            report_mod.write_csv(d / "norms.csv", entries)
            report_mod.plot_norm_series(entries, d / "norms.png")

    train_dir = stage(
        "train",
        train_key,
        {"model": "model.bin", "train_log": "train_log.json"},
        compute_train,
    )
    model = storage.load_model(train_dir / "model.bin")

    # evaluation on both held-out splits
    ecfg = config["eval"]
    eval_key = _key("eval", ecfg, train_key, ds_key)

    def compute_eval(d):
        for split_name, user_set in (
            ("val", split.val_users),
            ("test", split.test_users),
        ):
            users = _split_users(held_out, user_set)
            if ecfg.get("cold_start_mode"):
                users = evaluation.cold_start_filter(
                    users, ecfg["cold_start_mode"], ecfg["cold_start_value"]
                )
            rep = evaluation.evaluate(
                model,
                users,
                matrix.m,
                cutoffs=tuple(ecfg["cutoffs"]),
                tie_seed=ecfg["tie_seed"],
                config={"split": split_name,
                        "cold_start_mode": ecfg.get("cold_start_mode"),
                        "cold_start_value": ecfg.get("cold_start_value")},
            )
            report_mod.eval_artifacts(rep, d / f"report_{split_name}.json")

    eval_dir = stage(
        "eval",
        eval_key,
        {"report_val": "report_val.json", "report_test": "report_test.json"},
        compute_eval,
    )

    # diagnostics
    diag_key = _key("diagnose", train_key, len(split.train_users))

    def compute_diag(d):
        rep = diagnostics.norm_report(
            model if not isinstance(model, swdae.StackedModel) else model.layers[0],
            n=len(split.train_users),
        )
        storage.write_json(d / "norms.json", rep.to_dict())

    stage("diagnose", diag_key, {"norms": "norms.json"}, compute_diag)

    storage.write_json(
        out_dir / "run_manifest.json", _manifest_snapshot(manifest, out_dir)
    )
    with open(out_dir / "run_manifest.full.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    _ = eval_dir
    return manifest


def _manifest_snapshot(manifest: dict, out_dir: Path) -> dict:
    """Deterministic part of the manifest.

    Timings and cache-hit flags are excluded and artifact paths are made
    relative to the run directory, so two runs of the same config produce
    byte-identical snapshots wherever they live.
    """
    snap = {k: v for k, v in manifest.items() if k != "timings_sec"}
    snap["stages"] = {
        name: {"key": st["key"]} for name, st in manifest["stages"].items()
    }
    snap["artifacts"] = {
        label: str(Path(path).resolve().relative_to(out_dir.resolve()))
        for label, path in manifest["artifacts"].items()
    }
    return snap


SWEEP_AXES = ("sparsity", "width", "lambda1", "keep_fraction")


def run_sweep(axis: str, values, seeds, base_overrides: dict, out_dir) -> list[dict]:
    """One pipeline run per (grid value, seed); returns consolidated rows.

    Duplicate grid values are deduplicated; failures are recorded per point
    and the sweep continues.  Writes sweep.csv, sweep.json and sweep.png.
    """
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"unknown sweep axis {axis!r}; one of {SWEEP_AXES}")
    if not values:
        raise ConfigurationError("empty sweep grid")
    grid = sorted(set(values))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for value in grid:
        for seed in seeds:
            overrides = copy.deepcopy(base_overrides or {})
            cfg = merge_config(overrides)
            overrides.setdefault("training", {})["seed"] = seed
            overrides.setdefault("model", {})
            overrides.setdefault("grouping", {})
            if axis == "sparsity":
                k = cfg["grouping"]["k"]
                overrides["grouping"]["r"] = max(1, round(value * k))
                if overrides["grouping"]["r"] >= k:
                    # R = K saturates: identical to the FC baseline
                    overrides["model"]["variant"] = "fc"
                    del overrides["grouping"]["r"]
            elif axis == "width":
                ratio = cfg["grouping"]["r"] / cfg["grouping"]["k"]
                overrides["grouping"]["k"] = int(value)
                overrides["grouping"]["r"] = max(1, round(ratio * value))
            elif axis == "lambda1":
                overrides["model"]["variant"] = "fc_reg"
                overrides["model"]["lambda1"] = value
            elif axis == "keep_fraction":
                overrides["model"]["variant"] = "prune"
                overrides["model"]["keep_fraction"] = value

            row = {"axis": axis, axis: value, "seed": seed}
            try:
                point_dir = out_dir / f"{axis}_{value}_seed{seed}"
                manifest = run_pipeline(overrides, point_dir)
                for split_name in ("val", "test"):
                    path = manifest["artifacts"][f"report_{split_name}"]
                    means = json.loads(Path(path).read_text())["means"]
                    for metric, val in means.items():
                        row[f"{split_name}_{metric}"] = val
                row["status"] = "ok"
            except Exception as exc:  # record and continue
                row["status"] = f"error: {exc}"
            rows.append(row)

    fields = sorted({k for row in rows for k in row}, key=str)
    report_mod.write_csv(out_dir / "sweep.csv", rows, fieldnames=fields)
    storage.write_json(out_dir / "sweep.json", rows)
    ok_rows = [r for r in rows if r.get("status") == "ok"]
    if ok_rows:
        report_mod.plot_sweep(ok_rows, axis, out_dir / "sweep.png")
    return rows
