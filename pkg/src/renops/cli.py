"""Command-line entry point.

Subcommands cover the whole pipeline: graph generation, dynamics datasets,
training, evaluation, and the post-hoc analyses. Every command writes to
explicitly named paths and honors --seed, so pipelines are reproducible
end to end.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import analysis, container, datasets, dynamics, graphs
from .models import load_checkpoint
from .training import (TrainConfig, eval_specs, evaluate_model, make_batch,
                       train)


def _write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True, default=float)
    if path is None:
        print(text)
    else:
        with open(path, "w") as f:
            f.write(text + "\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


# -- subcommands -----------------------------------------------------------

def cmd_generate_graph(args):
    g = graphs.generate_powerlaw_cluster(args.n, args.m_attach, args.p_triad,
                                         args.seed)
    graphs.save_graph(args.out, g)
    try:
        alpha = f"{graphs.degree_exponent_fit(g, args.k_min):.3f}"
    except graphs.GraphError:
        alpha = "n/a"  # tail too small on tiny graphs; generation still fine
    print(f"wrote {args.out}: n={g.n} edges={g.nnz // 2} "
          f"alpha={alpha} clustering={graphs.average_clustering(g):.3f}")
    return 0


def cmd_generate_data(args):
    g = graphs.load_graph(args.graph)
    if args.kind == "kuramoto":
        cfg = dynamics.KuramotoConfig(
            coupling=args.coupling, dt_sample=args.dt_sample,
            t_end=args.t_end, seed=args.seed)
        ds = datasets.build_kuramoto_dataset(g, cfg, n_pe=args.n_pe,
                                             noise=args.noise,
                                             observable=args.observable)
    else:
        cfg = dynamics.BurgersConfig(
            beta=args.beta, m_iter=args.m_coupling,
            dt_sample=args.dt_sample, t_end=args.t_end, seed=args.seed)
        ds = datasets.build_burgers_dataset(g, cfg, n_pe=args.n_pe,
                                            noise=args.noise)
    datasets.save_dataset(args.out, ds)
    print(f"wrote {args.out}: kind={args.kind} n={ds.n} "
          f"t_count={ds.t_count}")
    return 0


def cmd_train(args):
    tc = TrainConfig.from_json(args.config)
    if args.seed is not None:
        tc.seed = args.seed
    ds = datasets.load_dataset(args.dataset)
    result = train(tc, ds, args.out_dir)
    print(f"trained {tc.model.variant}: best rel_l2={result.best_rel_l2:.4g}"
          f" (step {result.best_step}), persistence="
          f"{result.persistence_rel_l2:.4g}, log={result.log_path}")
    return 0


def cmd_evaluate(args):
    model, meta = load_checkpoint(args.checkpoint)
    ds = datasets.load_dataset(args.dataset)
    tc = TrainConfig.from_dict(meta["train"])
    metrics = evaluate_model(model, ds, eval_specs(ds, tc), tc.m_hist)
    metrics["checkpoint_step"] = meta.get("step")
    _write_json(args.json, metrics)
    return 0


def _conditioned_with_attention(checkpoint, dataset):
    model, meta = load_checkpoint(checkpoint)
    ds = datasets.load_dataset(dataset)
    tc = TrainConfig.from_dict(meta["train"])
    nodes, t_idx = eval_specs(ds, tc)[0]
    batch = make_batch(ds, nodes, t_idx, tc.m_hist)
    cond = model.condition(batch.feats, batch.a0, batch.u_hist,
                           batch.edge_dst, batch.edge_src,
                           capture_attention=True)
    if cond.attention is None:
        raise analysis.AnalysisError(
            f"variant {model.cfg.variant} has no attention maps")
    return model, cond


def cmd_analyze_attention(args):
    _, cond = _conditioned_with_attention(args.checkpoint, args.dataset)
    maps, tags = cond.attention, cond.batch.tags
    rows, head_dist = analysis.attention_stats(maps, tags)
    _write_csv(args.out, ("layer", "head", "fine_fine", "coarse_fine"),
               [(r["layer"], r["head"], f"{r['fine_fine']:.8g}",
                 f"{r['coarse_fine']:.8g}") for r in rows])
    blocks = {f"layer{i}": np.asarray(m) for i, m in enumerate(maps)}
    blocks["tags"] = tags.astype(np.float64)
    manifest = {
        "head_distance_rms": head_dist,
        "blocks": {k: list(v.shape) for k, v in blocks.items()},
    }
    if args.maps:
        container.write(args.maps, "attention", manifest, blocks)
    print(f"wrote {args.out}; per-layer head distance: "
          + ", ".join(f"{d:.4g}" for d in head_dist))
    return 0


def cmd_analyze_pca(args):
    _, cond = _conditioned_with_attention(args.checkpoint, args.dataset)
    block = analysis.coarse_to_fine_block(cond.attention, cond.batch.tags,
                                          layer=args.layer)
    comps, ratios, _ = analysis.attention_pca(block, k=args.k)
    rows = [(i, f"{ratios[i]:.8g}",
             *(f"{c:.8g}" for c in comps[i]))
            for i in range(len(ratios))]
    header = ("component", "explained_variance_ratio",
              *(f"v{j}" for j in range(comps.shape[1])))
    _write_csv(args.out, header, rows)
    top = f"top ratio {ratios[0]:.4g}" if len(ratios) else "empty spectrum"
    print(f"wrote {args.out}: {len(ratios)} components, {top}")
    return 0


def cmd_analyze_powerlaw(args):
    with open(args.points, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if [h.strip().lower() for h in header[:2]] != ["p", "l"]:
            raise analysis.AnalysisError(
                f"{args.points}: expected header P,L got {header}")
        pts = [(float(r[0]), float(r[1])) for r in reader if r]
    fit = analysis.powerlaw_fit(pts)
    _write_json(args.json, {"alpha": fit.alpha, "p_c": fit.p_c,
                            "residual": fit.residual})
    return 0


def cmd_analyze_pe(args):
    model, _ = load_checkpoint(args.checkpoint)
    if not hasattr(model, "pos"):
        raise analysis.AnalysisError(
            f"variant {model.cfg.variant} has no positional embeddings")
    table = getattr(model.pos, args.table).table.data
    sim = analysis.pe_similarity(table)
    _write_csv(args.out, [f"p{j}" for j in range(sim.shape[1])],
               [[f"{v:.8g}" for v in row] for row in sim])
    print(f"wrote {args.out}: {sim.shape[0]}x{sim.shape[1]} similarity")
    return 0


def cmd_info(args):
    _write_json(None, container.describe(args.path))
    return 0


# -- parser ----------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(
        prog="renops",
        description="Coupled dynamics on sparse graphs: data generation, "
                    "renormalized operator training, and analysis.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-graph", help="scale-free clustered graph")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m-attach", type=int, default=2)
    g.add_argument("--p-triad", type=float, default=1.0)
    g.add_argument("--k-min", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate_graph)

    d = sub.add_parser("generate-data", help="simulate dynamics on a graph")
    d.add_argument("kind", choices=("kuramoto", "burgers"))
    d.add_argument("--graph", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--noise", type=float, default=0.02)
    d.add_argument("--n-pe", type=int, default=16)
    d.add_argument("--dt-sample", type=float, default=5e-3)
    d.add_argument("--t-end", type=float, default=1.0)
    d.add_argument("--coupling", type=float, default=1.7)
    d.add_argument("--observable", choices=("sin", "phase"), default="sin",
                   help="kuramoto node observable before normalization")
    d.add_argument("--beta", type=float, default=0.75)
    d.add_argument("--m-coupling", type=int, default=6)
    d.set_defaults(func=cmd_generate_data)

    t = sub.add_parser("train", help="train a model from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--dataset", required=True)
    t.add_argument("--out-dir", required=True)
    t.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="held-out metrics for a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--json", default=None, help="write metrics here "
                   "instead of stdout")
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("analyze", help="post-hoc analyses")
    asub = a.add_subparsers(dest="analysis", required=True)

    att = asub.add_parser("attention", help="per-head attention masses")
    att.add_argument("--checkpoint", required=True)
    att.add_argument("--dataset", required=True)
    att.add_argument("--out", required=True, help="stats CSV")
    att.add_argument("--maps", default=None,
                     help="optional raw-map container")
    att.set_defaults(func=cmd_analyze_attention)

    pca = asub.add_parser("pca", help="PCA of coarse-to-fine attention")
    pca.add_argument("--checkpoint", required=True)
    pca.add_argument("--dataset", required=True)
    pca.add_argument("--out", required=True)
    pca.add_argument("--layer", type=int, default=0)
    pca.add_argument("--k", type=int, default=16)
    pca.set_defaults(func=cmd_analyze_pca)

    pw = asub.add_parser("powerlaw", help="fit L(P) = (P_c/P)^alpha")
    pw.add_argument("--points", required=True,
                    help="CSV with header P,L")
    pw.add_argument("--json", default=None)
    pw.set_defaults(func=cmd_analyze_powerlaw)

    pe = asub.add_parser("pe", help="positional-embedding similarity")
    pe.add_argument("--checkpoint", required=True)
    pe.add_argument("--out", required=True)
    pe.add_argument("--table", choices=("scale_table", "index_table"),
                    default="scale_table")
    pe.set_defaults(func=cmd_analyze_pe)

    i = sub.add_parser("info", help="describe a container file")
    i.add_argument("path")
    i.set_defaults(func=cmd_info)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:  # uniform nonzero exit with the failing reason
        print(f"renops: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
