"""Command-line interface.

Subcommands: ingest, synth, graph, embed, group, train, eval, diagnose,
baseline, sweep, pipeline, mask-stats.  Exit code 0 on success; failures
exit with the distinct code carried by the raised error class.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import baselines, diagnostics, evaluation, graph, grouping, ingest
from . import pipeline as pipeline_mod
from . import report as report_mod
from . import spectral, storage, structure, swdae, synth
from .errors import ConfigurationError, SwrecError


def _add_train_flags(p):
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch", type=int, default=500)
    p.add_argument("--input-dropout", type=float, default=0.6)
    p.add_argument("--hidden-dropout", type=float, default=0.2)
    p.add_argument("--loss", choices=swdae.LOSS_KINDS, default="bernoulli")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-seed", type=int, default=0)
    p.add_argument("--corruption-seed", type=int, default=0)
    p.add_argument("--track-norms", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swrec",
        description="Sparse-and-wide denoising autoencoder recommender",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load raw events into a dataset directory")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("csv", "tsv"), default="csv")
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--min-user-events", type=int, default=0)
    p.add_argument("--min-item-users", type=int, default=0)
    p.add_argument("--n-val", type=int, default=0)
    p.add_argument("--n-test", type=int, default=0)
    p.add_argument("--fold-in-fraction", type=float, default=0.8)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="generate a planted-block dataset")
    p.add_argument("--users", type=int, default=2000)
    p.add_argument("--items", type=int, default=300)
    p.add_argument("--blocks", type=int, default=3)
    p.add_argument("--pin", type=float, default=0.3)
    p.add_argument("--pout", type=float, default=0.01)
    p.add_argument("--overlap", type=int, default=0)
    p.add_argument("--popularity-exponent", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--n-val", type=int, default=200)
    p.add_argument("--n-test", type=int, default=200)
    p.add_argument("--fold-in-fraction", type=float, default=0.8)
    p.add_argument("--split-seed", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("graph", help="dump the normalized Laplacian as triplets")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("embed", help="write the item embedding as a text matrix")
    p.add_argument("--dataset", required=True)
    p.add_argument("--algo", choices=("laplacian", "svd"), default="laplacian")
    p.add_argument("--f", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("group", help="compute overlapping item clusters")
    p.add_argument("--dataset", required=True)
    p.add_argument("--algo", choices=("laplacian", "svd"), default="laplacian")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--f", type=int, default=50)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--normalization", choices=("row_sum", "l2"), default="row_sum")
    p.add_argument("--kmeans-max-iters", type=int, default=100)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the SW-DAE from a clusters file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--clusters", required=True)
    _add_train_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="rank held-out users and report metrics")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=("val", "test"), default="test")
    p.add_argument("--cutoffs", default="20,50,100")
    p.add_argument("--tie-seed", type=int, default=0)
    p.add_argument("--cold-start-quantile", type=float, default=None)
    p.add_argument("--cold-start-max-count", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("diagnose", help="weight norms and generalization bound")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True, help="training-user count")
    p.add_argument("--out", required=True)

    p = sub.add_parser("mask-stats", help="density, degrees, parameter counts")
    p.add_argument("--clusters", required=True)
    p.add_argument("--items", type=int, required=True)

    p = sub.add_parser("baseline", help="train a comparison model")
    p.add_argument("kind", choices=("fc", "prune", "l1reg"))
    p.add_argument("--dataset", required=True)
    p.add_argument("--k", type=int, required=True)
    _add_train_flags(p)
    p.add_argument("--keep-fraction", type=float, default=0.1)
    p.add_argument("--retrain-epochs", type=int, default=100)
    p.add_argument("--lambda1", type=float, default=0.001)
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", help="run all stages from a config file")
    p.add_argument("--config", help="JSON config file; omit for defaults")
    p.add_argument("--set", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="override a config value")
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="grid of pipeline runs along one axis")
    p.add_argument("--axis", choices=pipeline_mod.SWEEP_AXES, required=True)
    p.add_argument("--values", required=True, help="comma-separated grid")
    p.add_argument("--seeds", default="0", help="comma-separated seeds")
    p.add_argument("--config", help="base JSON config file")
    p.add_argument("--out", required=True)

    return parser


def _load_split(args):
    matrix, split, held_out = storage.load_dataset(args.dataset)
    if split is None:
        raise ConfigurationError(f"dataset {args.dataset} has no split.json")
    return matrix, split, held_out


def _train_common(args, model, matrix, split):
    corruption = swdae.CorruptionConfig(
        input_dropout_p=args.input_dropout,
        hidden_dropout_p=args.hidden_dropout,
        seed=args.corruption_seed,
    )
    cfg = swdae.TrainConfig(
        batch_size=args.batch, epochs=args.epochs,
        learning_rate=args.lr, seed=args.seed,
    )
    train_rows = [matrix.rows[u] for u in split.train_users]
    series: list = []
    callback = None
    if args.track_norms:
        callback = diagnostics.tracking_callback(len(train_rows), series)
    return corruption, cfg, train_rows, callback, series


def _write_norm_series(series, out_path: Path):
    entries = [
        {
            "epoch": r.epoch,
            "encoder_spectral_norm": r.layers[0].spectral_norm,
            "generalization_bound": r.bound,
        }
        for r in series
    ]
    base = out_path.with_suffix("")
    report_mod.write_csv(base.parent / (base.name + "_norms.csv"), entries)
    report_mod.plot_norm_series(entries, base.parent / (base.name + "_norms.png"))
    for i, rep in enumerate(series):
        storage.write_json(
            base.parent / f"norms_epoch_{i:04d}.json", rep.to_dict()
        )


def cmd_ingest(args) -> int:
    events = ingest.load_events(args.input, args.format, args.threshold)
    matrix = ingest.build_matrix(events, args.min_user_events, args.min_item_users)
    split, held_out = ingest.split_users(
        matrix, args.n_val, args.n_test, args.fold_in_fraction, args.split_seed
    )
    storage.save_dataset(args.out, matrix, split, held_out)
    print(f"dataset written to {args.out}: n={matrix.n} m={matrix.m} "
          f"nnz={matrix.nnz}")
    return 0


def cmd_synth(args) -> int:
    spec = synth.PlantedSpec(
        n_users=args.users, m_items=args.items, n_blocks=args.blocks,
        within_block_p=args.pin, cross_block_p=args.pout,
        overlap_items_per_pair=args.overlap,
        popularity_exponent=args.popularity_exponent, seed=args.seed,
    )
    matrix, truth = synth.generate(spec)
    split, held_out = ingest.split_users(
        matrix, args.n_val, args.n_test, args.fold_in_fraction, args.split_seed
    )
    storage.save_dataset(args.out, matrix, split, held_out, truth=truth)
    print(f"synthetic dataset written to {args.out}: n={matrix.n} m={matrix.m}")
    return 0


def cmd_graph(args) -> int:
    matrix, _, _ = storage.load_dataset(args.dataset)
    lap = graph.build_laplacian(graph.build_cooccurrence(matrix))
    graph.dump_triplets(lap, args.out)
    print(f"laplacian triplets written to {args.out}")
    return 0


def cmd_embed(args) -> int:
    matrix, _, _ = storage.load_dataset(args.dataset)
    cfg = spectral.EigsConfig(f=args.f, seed=args.seed)
    if args.algo == "laplacian":
        lap = graph.build_laplacian(graph.build_cooccurrence(matrix))
        emb = spectral.top_eigenvectors(lap, cfg)
    else:
        emb = spectral.top_singular_triplets(matrix, cfg)
    np.savetxt(args.out, emb.coords)
    print(f"{emb.m}x{emb.f} embedding written to {args.out}")
    return 0


def cmd_group(args) -> int:
    matrix, _, _ = storage.load_dataset(args.dataset)
    cfg = grouping.GroupingConfig(
        k=args.k, r=args.r, f=args.f, seed=args.seed,
        normalization=args.normalization, kmeans_max_iters=args.kmeans_max_iters,
    )
    clusters = grouping.item_grouping(matrix, cfg, algo=args.algo)
    storage.write_json(args.out, {
        "k": clusters.k,
        "inertia": clusters.inertia,
        "assignments": clusters.assignments.tolist(),
        "config": {
            "k": args.k, "r": args.r, "f": args.f, "seed": args.seed,
            "algo": args.algo, "normalization": args.normalization,
        },
    })
    print(f"{clusters.k} overlapping clusters written to {args.out}")
    return 0


def _load_clusters(path) -> grouping.OverlappingClusters:
    payload = json.loads(Path(path).read_text())
    assignments = np.array(payload["assignments"], dtype=np.int32)
    return grouping.OverlappingClusters(
        k=payload["k"], assignments=assignments,
        centroids=np.zeros((payload["k"], 1)),
        inertia=payload.get("inertia", float("nan")),
    )


def cmd_train(args) -> int:
    matrix, split, _ = _load_split(args)
    clusters = _load_clusters(args.clusters)
    mask = structure.build_mask(clusters, matrix.m)
    model = swdae.init_model(mask, seed=args.init_seed, loss_kind=args.loss)
    corruption, cfg, train_rows, callback, series = _train_common(
        args, model, matrix, split
    )
    log = swdae.train(model, train_rows, corruption, cfg, callback=callback)
    storage.save_model(args.out, model)
    out = Path(args.out)
    storage.write_json(out.with_suffix(".log.json"),
                       {"header": log.header, "epochs": log.epochs})
    if series:
        _write_norm_series(series, out)
    print(f"model written to {args.out}; final train loss "
          f"{log.epochs[-1]['train_loss']:.4f}" if log.epochs else
          f"model written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    matrix, split, held_out = _load_split(args)
    model = storage.load_model(args.model)
    user_set = split.val_users if args.split == "val" else split.test_users
    chosen = set(int(u) for u in user_set)
    users = [hu for hu in held_out if hu.user in chosen]
    cold_config = {}
    if args.cold_start_quantile is not None:
        users = evaluation.cold_start_filter(
            users, "bottom_quantile", args.cold_start_quantile
        )
        cold_config = {"cold_start_mode": "bottom_quantile",
                       "cold_start_value": args.cold_start_quantile}
    elif args.cold_start_max_count is not None:
        users = evaluation.cold_start_filter(
            users, "count_at_most", args.cold_start_max_count
        )
        cold_config = {"cold_start_mode": "count_at_most",
                       "cold_start_value": args.cold_start_max_count}
    cutoffs = tuple(int(c) for c in args.cutoffs.split(","))
    rep = evaluation.evaluate(
        model, users, matrix.m, cutoffs=cutoffs, tie_seed=args.tie_seed,
        config={"split": args.split, **cold_config},
    )
    report_mod.eval_artifacts(rep, args.out)
    for name, value in rep.means.items():
        print(f"{name}: {value:.4f}")
    return 0


def cmd_diagnose(args) -> int:
    model = storage.load_model(args.model)
    if isinstance(model, swdae.StackedModel):
        model = model.layers[0]
    rep = diagnostics.norm_report(model, n=args.n)
    storage.write_json(args.out, rep.to_dict())
    print(f"encoder spectral norm {rep.layers[0].spectral_norm:.4f}, "
          f"bound {rep.bound:.4f}")
    return 0


def cmd_mask_stats(args) -> int:
    clusters = _load_clusters(args.clusters)
    mask = structure.build_mask(clusters, args.items)
    counts = structure.count_parameters(mask)
    degrees = mask.neuron_degrees()
    hist = np.bincount(degrees)
    print(f"items: {mask.m}  neurons: {mask.k}  density: {mask.density:.4f}")
    print(f"parameters: {counts['parameters']}  "
          f"weights: {counts['weight_parameters']}  "
          f"flops/example: {counts['flops_per_example']}")
    print("neuron degree histogram (degree: count):")
    for degree, count in enumerate(hist):
        if count:
            print(f"  {degree}: {count}")
    return 0


def cmd_baseline(args) -> int:
    matrix, split, _ = _load_split(args)
    corruption, cfg, train_rows, callback, series = _train_common(
        args, None, matrix, split
    )
    if args.kind == "fc":
        model, log = baselines.train_fc(
            matrix.m, args.k, train_rows, corruption, cfg,
            seed=args.init_seed, loss_kind=args.loss, callback=callback,
        )
    elif args.kind == "l1reg":
        model, log = baselines.train_fc_reg(
            matrix.m, args.k, train_rows, corruption, cfg,
            baselines.RegConfig(lambda1=args.lambda1),
            seed=args.init_seed, loss_kind=args.loss, callback=callback,
        )
    else:  # prune
        fc, _ = baselines.train_fc(
            matrix.m, args.k, train_rows, corruption, cfg,
            seed=args.init_seed, loss_kind=args.loss,
        )
        model, log = baselines.prune_and_retrain(
            fc,
            baselines.PruneConfig(keep_fraction=args.keep_fraction,
                                  retrain_epochs=args.retrain_epochs),
            train_rows, corruption, cfg,
        )
    storage.save_model(args.out, model)
    out = Path(args.out)
    storage.write_json(out.with_suffix(".log.json"),
                       {"header": log.header, "epochs": log.epochs})
    if series:
        _write_norm_series(series, out)
    print(f"{args.kind} baseline model written to {args.out}")
    return 0


def _parse_overrides(pairs: list[str]) -> dict:
    overrides: dict = {}
    for pair in pairs:
        if "=" not in pair or "." not in pair.split("=", 1)[0]:
            raise ConfigurationError(
                f"--set expects SECTION.KEY=VALUE, got {pair!r}"
            )
        dotted, raw = pair.split("=", 1)
        section, key = dotted.split(".", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        overrides.setdefault(section, {})[key] = value
    return overrides


def cmd_pipeline(args) -> int:
    overrides = {}
    if args.config:
        overrides = json.loads(Path(args.config).read_text())
    for section, values in _parse_overrides(args.set).items():
        overrides.setdefault(section, {}).update(values)
    manifest = pipeline_mod.run_pipeline(overrides, args.out)
    hits = [s for s, st in manifest["stages"].items() if st["cache_hit"]]
    print(f"pipeline complete; manifest at {args.out}/run_manifest.json")
    if hits:
        print(f"cache hits: {', '.join(hits)}")
    return 0


def cmd_sweep(args) -> int:
    overrides = {}
    if args.config:
        overrides = json.loads(Path(args.config).read_text())
    values = [float(v) for v in args.values.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = pipeline_mod.run_sweep(args.axis, values, seeds, overrides, args.out)
    failed = [r for r in rows if r.get("status") != "ok"]
    print(f"sweep complete: {len(rows)} points, {len(failed)} failed; "
          f"table at {args.out}/sweep.csv")
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "graph": cmd_graph,
    "embed": cmd_embed,
    "group": cmd_group,
    "train": cmd_train,
    "eval": cmd_eval,
    "diagnose": cmd_diagnose,
    "mask-stats": cmd_mask_stats,
    "baseline": cmd_baseline,
    "pipeline": cmd_pipeline,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SwrecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
