"""Command-line front end: ``hcmkr {train,evaluate,export-emb,gen-data}``.

Exit codes: 0 success, 1 usage/config error, 2 data or checkpoint error,
3 numerical abort.
"""

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import torch

from . import checkpoint as ckpt_io
from .config import RunConfig, load_config
from .errors import CheckpointError, HCMKRError, NumericalError
from .graph import gen_synthetic, save_interactions, save_kg
from .metrics import format_table
from .train import (
    DATASET_FILE, INTERACTIONS_FILE, ITEM_ENTITY_FILE, KG_FILE,
    evaluate, final_tangent, setup, train, write_counts,
)


def _ks(text):
    try:
        ks = sorted({int(k) for k in text.split(",") if k.strip()})
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None
    if not ks or ks[0] < 1:
        raise argparse.ArgumentTypeError("K values must be positive")
    return ks


def cmd_train(args):
    cfg = load_config(args.config)
    out = Path(args.out) if args.out else Path(cfg.out_dir)
    try:
        res = train(cfg, out, resume=args.resume, log=print)
    except NumericalError as exc:
        print(f"numerical abort: {exc} (last good checkpoint in {out})", file=sys.stderr)
        raise
    print(f"epochs run: {res.epochs_run}" + (" (early stop)" if res.stopped_early else ""))
    print(format_table(res.test, cfg.k_list()), end="")
    return 0


def _load_checked(checkpoint, cfg):
    ck = ckpt_io.load(checkpoint)
    if ck.config_hash != cfg.model_hash():
        raise CheckpointError("config hash mismatch between checkpoint and config")
    return ck


def _check_shapes(st, params):
    want = {"user": st.g1.num_users, "item": st.g1.num_items,
            "entity": st.g2.num_entities, "relation": st.g2.num_relations}
    for name, n in want.items():
        if getattr(params, name).shape != (n, st.cfg.dim - 1):
            raise CheckpointError(f"checkpoint {name} table has shape {tuple(getattr(params, name).shape)}, "
                                  f"data needs ({n}, {st.cfg.dim - 1})")


def cmd_evaluate(args):
    cfg = load_config(args.config)
    ck = _load_checked(args.checkpoint, cfg)
    st = setup(cfg)
    _check_shapes(st, ck.params)
    ks = args.k or cfg.k_list()
    means = evaluate(st, ck.params, args.split, ks)
    if args.report == "json":
        print(json.dumps({"split": args.split, "metrics": means}, sort_keys=True))
    else:
        print(format_table(means, ks), end="")
    return 0


def cmd_export(args):
    ck = ckpt_io.load(args.checkpoint)
    known = {f.name for f in fields(RunConfig)}
    cfg = RunConfig(**{k: v for k, v in ck.config.items() if k in known})
    if ck.config_hash != cfg.model_hash():
        raise CheckpointError("stored config does not match the checkpoint's config hash")
    st = setup(cfg)
    _check_shapes(st, ck.params)
    users, items = final_tangent(st.encoder, ck.params)
    if args.space == "lorentz":
        c = ck.params.c.detach()
        users, items = st.encoder.geometry.exp0(users, c), st.encoder.geometry.exp0(items, c)
    else:
        # tangent vectors at the origin carry an explicit zero time coordinate
        users, items = (torch.nn.functional.pad(t, (1, 0)) for t in (users, items))
    rows = [("user", users), ("item", items)]
    with open(args.out, "w", encoding="utf-8") as fh:
        for kind, table in rows:
            for i, vec in enumerate(table.tolist()):
                fh.write(f"{i}\t{kind}\t" + "\t".join(repr(x) for x in vec) + "\n")
    print(f"wrote {st.g1.num_users + st.g1.num_items} rows to {args.out}")
    return 0


def cmd_gen_data(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    g1, g2 = gen_synthetic(args.users, args.items, args.entities, args.relations,
                           args.power_exponent, seed=args.seed)
    save_interactions(g1, out / INTERACTIONS_FILE)
    save_kg(g2, out / KG_FILE, out / ITEM_ENTITY_FILE)
    write_counts(out / DATASET_FILE, g1, g2)
    print(f"{g1.num_users} users, {g1.num_items} items, {g1.num_edges} interactions, "
          f"{g2.num_entities} entities, {len(g2.triples)} triples -> {out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="hcmkr", description="Hyperbolic knowledge-aware recommendation with contrastive views.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1, help="torch intra-op threads (default 1)")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train a model from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--out", help="output directory (default: out_dir from the config)")
    t.add_argument("--resume", action="store_true", help="continue from the checkpoint in the output directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", parents=[common], help="all-ranking Recall@K / NDCG@K of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", required=True)
    e.add_argument("--k", type=_ks, help="comma separated K values (default: ks from the config)")
    e.add_argument("--split", choices=("test", "valid"), default="test")
    e.add_argument("--report", choices=("tsv", "json"), default="tsv")
    e.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("export-emb", parents=[common], help="write final user/item embeddings as TSV")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--space", choices=("lorentz", "tangent"), default="lorentz")
    x.set_defaults(func=cmd_export)

    g = sub.add_parser("gen-data", parents=[common], help="write a synthetic hierarchical dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--users", type=int, default=200)
    g.add_argument("--items", type=int, default=100)
    g.add_argument("--entities", type=int, default=150)
    g.add_argument("--relations", type=int, default=4)
    g.add_argument("--power-exponent", type=float, default=1.5)
    g.set_defaults(func=cmd_gen_data)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; usage errors exit 1 here
        return 0 if exc.code == 0 else 1
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 1
    torch.set_num_threads(args.threads)
    try:
        return args.func(args)
    except HCMKRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
