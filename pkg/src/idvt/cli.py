"""Command-line entry points: stats, denoise, train, sweep, ablate, synth."""

import argparse
import json
import os

import numpy as np

from . import config as cfg
from . import social_stats as stats
from .dataset_io import Dataset, load_raw, preprocess
from .denoise import denoise_graph, write_edge_audit
from .errors import ConfigError
from .model import init_parameters
from .optim import load_params, save_params
from .rng import RngHub
from .sparse_graph import build_interaction_matrix, build_social_matrix
from .synthetic import make_synthetic
from .train_eval import run_training
from .config import load_dataset_from_config

SWEEP_PARAMS = {
    "threshold": "threshold",
    "lambda1": "lambda1",
    "lambda2": "lambda2",
    "drop_ratio": "drop_ratio",
    "tau": "tau",
    "beta": "beta",
    "K": "n_layers",
    "n_layers": "n_layers",
}

ABLATION_ROWS = ("full", "no_LV", "no_DV", "no_both")


def _dataset_from_raw_unfiltered(raw):
    """ID-map raw records without any filtering (the pre-5-core view)."""
    user_map, item_map = {}, {}
    pairs = set()
    for user, item, _rating in raw.interactions:
        if user not in user_map:
            user_map[user] = len(user_map)
        if item not in item_map:
            item_map[item] = len(item_map)
        pairs.add((user_map[user], item_map[item]))
    social = {
        (user_map[u], user_map[v])
        for u, v in raw.social
        if u in user_map and v in user_map
    }
    return Dataset(
        n=len(user_map), m=len(item_map), user_map=user_map, item_map=item_map,
        train_pairs=pairs, test_pairs=set(), social_edges=social,
    )


def _stats_block(dataset):
    interaction = build_interaction_matrix(dataset, include_test=True)
    social = build_social_matrix(dataset)
    report = stats.compute_stats(interaction, social)
    n_ratings = interaction.nnz
    n_relations = social.nnz
    return {
        "users": dataset.n,
        "items": dataset.m,
        "ratings": n_ratings,
        "rating_density": n_ratings / (dataset.n * dataset.m),
        "relations": n_relations,
        "relation_density": n_relations / (dataset.n * dataset.n),
        "noise_ratio": report.noise_ratio,
        "soc_ave_int": report.soc_ave_int,
        "col_ave_int": report.col_ave_int,
        "counted_social_pairs": report.counted_social_pairs,
        "counted_collab_pairs": report.counted_collab_pairs,
    }


def cmd_stats(args):
    ratings = os.path.join(args.data, cfg.RATINGS_FILE)
    trust = os.path.join(args.data, cfg.TRUST_FILE)
    raw = load_raw(ratings, trust)
    payload = {
        "data_dir": args.data,
        "pre_core": _stats_block(_dataset_from_raw_unfiltered(raw)),
        "post_core": _stats_block(preprocess(raw)),
        "published_reference": stats.PUBLISHED_BENCHMARKS,
    }
    print(json.dumps(payload, indent=2))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "stats.json"), "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return 0


def cmd_denoise(args):
    config = cfg.load_config(args.config, data_dir=args.data, seed=args.seed,
                             threshold=args.threshold, out_dir=args.out)
    raw = load_raw(os.path.join(config.data_dir, cfg.RATINGS_FILE),
                   os.path.join(config.data_dir, cfg.TRUST_FILE))
    dataset = preprocess(raw)
    social = build_social_matrix(dataset)
    if args.checkpoint:
        user_emb = load_params(args.checkpoint)["user_emb"].data
    else:
        params = init_parameters(dataset.n, dataset.m, config.dim, RngHub(config.seed))
        user_emb = params["user_emb"].data
    graph = denoise_graph(social, user_emb, config.threshold)
    out_dir = config.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    tokens = dataset.user_tokens()
    write_edge_audit(
        graph,
        os.path.join(out_dir, "kept_edges.txt"),
        os.path.join(out_dir, "removed_edges.txt"),
        user_tokens=tokens,
    )
    cfg.write_run_record(out_dir, config, extra={
        "command": "denoise",
        "edges": int(graph.src.size),
        "removed": int(np.count_nonzero(~graph.kept_mask)),
        "removal_ratio": graph.removal_ratio,
    })
    print(f"edges={graph.src.size} removed={int(np.count_nonzero(~graph.kept_mask))} "
          f"removal_ratio={graph.removal_ratio:.4f}")
    return 0


def _write_losses_csv(path, history):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,L_BPR,L_GL_inter,L_G_intra,L_D_inter,total\n")
        for row in history:
            fh.write(
                f"{row['epoch']},{row['bpr']!r},{row['inter_gl']!r},"
                f"{row['intra_g']!r},{row['inter_d']!r},{row['total']!r}\n"
            )


def _train_once(config, out_dir):
    report, result = run_training(config)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    _write_losses_csv(os.path.join(out_dir, "losses.csv"), result.history)
    save_params(os.path.join(out_dir, "checkpoint.bin"), result.state.params)
    cfg.write_run_record(out_dir, config, extra={
        "command": "train",
        "best_epoch": result.best_epoch,
        "best_val_ndcg": result.best_val_ndcg,
    })
    return report, result


def cmd_train(args):
    config = cfg.load_config(args.config, data_dir=args.data, seed=args.seed,
                             variant=args.variant, out_dir=args.out)
    report, _ = _train_once(config, config.out_dir or ".")
    print(report.to_json())
    return 0


def cmd_sweep(args):
    if args.param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {args.param!r}; "
                          f"choose from {sorted(set(SWEEP_PARAMS))}")
    field = SWEEP_PARAMS[args.param]
    values = []
    for chunk in args.values.split(","):
        chunk = chunk.strip()
        values.append(int(chunk) if field == "n_layers" else float(chunk))
    config = cfg.load_config(args.config, data_dir=args.data, seed=args.seed,
                             out_dir=args.out)
    dataset = load_dataset_from_config(config)
    out_dir = config.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for value in values:
        run_config = config.with_overrides(**{field: value})
        report, result = run_training(run_config, dataset=dataset)
        row = {"value": value}
        if field == "threshold":
            row["removal_ratio"] = final_removal_ratio(result.state)
        row.update(hit_ratio=report.hit_ratio, precision=report.precision,
                   recall=report.recall, ndcg=report.ndcg)
        rows.append(row)
    header = list(rows[0])
    csv_path = os.path.join(out_dir, "sweep.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(row[col]) for col in header) + "\n")
    cfg.write_run_record(out_dir, config, extra={
        "command": "sweep", "param": args.param, "values": values,
    })
    widths = {col: max(len(col), 12) for col in header}
    print("  ".join(col.ljust(widths[col]) for col in header))
    for row in rows:
        print("  ".join(f"{row[col]:<{widths[col]}.6g}" if isinstance(row[col], float)
                        else str(row[col]).ljust(widths[col]) for col in header))
    return 0


def final_removal_ratio(state):
    """Removal ratio of the denoised graph at the final parameters."""
    if not state.spec.uses_social:
        return None
    graph = denoise_graph(state.social, state.params["user_emb"].data, state.hyper.threshold)
    return graph.removal_ratio


def cmd_ablate(args):
    config = cfg.load_config(args.config, data_dir=args.data, seed=args.seed,
                             out_dir=args.out)
    dataset = load_dataset_from_config(config)
    out_dir = config.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for variant in ABLATION_ROWS:
        report, _ = run_training(config.with_overrides(variant=variant), dataset=dataset)
        rows.append({
            "variant": variant, "hit_ratio": report.hit_ratio,
            "precision": report.precision, "recall": report.recall, "ndcg": report.ndcg,
        })
    csv_path = os.path.join(out_dir, "ablation.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("variant,hit_ratio,precision,recall,ndcg\n")
        for row in rows:
            fh.write(f"{row['variant']},{row['hit_ratio']!r},{row['precision']!r},"
                     f"{row['recall']!r},{row['ndcg']!r}\n")
    cfg.write_run_record(out_dir, config, extra={"command": "ablate"})
    print(f"{'variant':<20}{'H@K':>10}{'P@K':>10}{'R@K':>10}{'N@K':>10}")
    for row in rows:
        print(f"{row['variant']:<20}{row['hit_ratio']:>10.4f}{row['precision']:>10.4f}"
              f"{row['recall']:>10.4f}{row['ndcg']:>10.4f}")
    return 0


def cmd_synth(args):
    make_synthetic(args.users, args.items, args.communities, args.noise,
                   args.seed, args.out)
    print(f"wrote synthetic dataset to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="idvt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_stats = sub.add_parser("stats", help="dataset audit: noise metrics and counts")
    p_stats.add_argument("--data", required=True)
    p_stats.add_argument("--out", default=None)
    p_stats.set_defaults(func=cmd_stats)

    p_denoise = sub.add_parser("denoise", help="score social edges and export kept/removed lists")
    p_denoise.add_argument("--data", default=None)
    p_denoise.add_argument("--config", default=None)
    p_denoise.add_argument("--seed", type=int, default=None)
    p_denoise.add_argument("--threshold", type=float, default=None)
    p_denoise.add_argument("--checkpoint", default=None)
    p_denoise.add_argument("--out", default=None)
    p_denoise.set_defaults(func=cmd_denoise)

    p_train = sub.add_parser("train", help="fit one variant and evaluate")
    p_train.add_argument("--config", default=None)
    p_train.add_argument("--data", default=None)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--variant", default=None)
    p_train.add_argument("--out", default=None)
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser("sweep", help="one run per value of a hyperparameter")
    p_sweep.add_argument("--config", default=None)
    p_sweep.add_argument("--data", default=None)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--values", required=True)
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    p_ablate = sub.add_parser("ablate", help="full / no_LV / no_DV / no_both table")
    p_ablate.add_argument("--config", default=None)
    p_ablate.add_argument("--data", default=None)
    p_ablate.add_argument("--seed", type=int, default=None)
    p_ablate.add_argument("--out", default=None)
    p_ablate.set_defaults(func=cmd_ablate)

    p_synth = sub.add_parser("synth", help="generate a planted-noise synthetic dataset")
    p_synth.add_argument("--users", type=int, required=True)
    p_synth.add_argument("--items", type=int, required=True)
    p_synth.add_argument("--communities", type=int, required=True)
    p_synth.add_argument("--noise", type=float, required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=cmd_synth)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
