"""Command-line entry point: ``hinwalk <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

log = logging.getLogger("hinwalk")

COMMANDS = ("prepare", "embed", "train", "infer", "eval-qa", "eval-lp", "baseline",
            "inductive-study", "report", "fixture")


# ---------------------------------------------------------------------------
# shared helpers


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_path, command: str, cfg, inputs, started: float, extra=None) -> Path:
    """Config echo, seed, input content hashes and wall time next to an artifact."""
    out_path = Path(out_path)
    target = out_path / "manifest.json" if out_path.is_dir() else out_path.with_name(out_path.name + ".manifest.json")
    body = {
        "command": command,
        "config": cfg.to_dict() if cfg is not None else {},
        "seed": getattr(cfg, "seed", None),
        "inputs": {str(p): sha256_of(p) for p in inputs if p and Path(p).is_file()},
        "wall_time_s": round(time.time() - started, 3),
    }
    if extra:
        body.update(extra)
    target.write_text(json.dumps(body, indent=2, sort_keys=True, default=str) + "\n")
    return target


def _require(path, what: str, hint: str = ""):
    from .errors import MissingArtifactError
    if not path or not Path(path).exists():
        raise MissingArtifactError(f"{what} ({path})" if path else what, hint)
    return Path(path)


def _config(args):
    from .config import load_config
    overrides = dict(kv.split("=", 1) for kv in (args.set or []))
    for key in ("triples", "types", "relations", "schema", "seed", "beam_width", "setting"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = str(val)
    return load_config(args.config, overrides)


def _graphs(cfg):
    """(graph, schema) with optional inverse augmentation."""
    from .graph import add_inverse_relations, derive_schema_graph, load_instance_graph, load_schema_graph
    _require(cfg.triples, "triples file", "set triples = <path> in the config")
    _require(cfg.types, "types file", "set types = <path> in the config")
    g = load_instance_graph(cfg.triples, cfg.types, cfg.relations or None)
    s = load_schema_graph(cfg.schema, g) if cfg.schema else derive_schema_graph(g)
    if cfg.inverse:
        g, s = add_inverse_relations(g, s)
    return g, s


def _relation_ids(g, names):
    return [g.relation_id(n) for n in names]


def _inputs(cfg):
    return [cfg.triples, cfg.types, cfg.relations, cfg.schema]


def _read_pairs(path, g):
    from .errors import ParseError
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise ParseError("expected head, tail, label", lineno, str(path))
            rows.append((g.entity_id(parts[0]), g.entity_id(parts[1]), int(parts[2])))
    return rows


def _load_dataset(ds_dir, g, rel_name):
    from .linkpred import LPDataset
    d = _require(Path(ds_dir) / rel_name, f"dataset for relation {rel_name}", "run `hinwalk prepare` first")
    r = g.relation_id(rel_name)
    return LPDataset(r, _read_pairs(d / "train.tsv", g), _read_pairs(d / "test.tsv", g))


def _training_graph(cfg, g, ds_dir=None):
    """Graph the agent trains and scores on: test facts (and, inductively,
    held-out relations) removed."""
    from .graph import derive_schema_graph, remove_relations, remove_triples
    out = g
    if ds_dir:
        facts = []
        for name in cfg.test_relations or cfg.train_relations:
            p = Path(ds_dir) / name / "test.tsv"
            if p.exists():
                r = g.relation_id(name)
                facts += [(h, r, t) for h, t, y in _read_pairs(p, g) if y == 1]
        if facts:
            out = remove_triples(out, facts)
    if cfg.setting == "multi-relation-inductive" and cfg.test_relations:
        out = remove_relations(out, _relation_ids(g, cfg.test_relations))
    return out, derive_schema_graph(out)


# ---------------------------------------------------------------------------
# commands


def cmd_prepare(args):
    from .linkpred import add_negatives, prepare_dataset
    started = time.time()
    cfg = _config(args)
    g, _ = _graphs(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = cfg.test_relations or cfg.train_relations
    if not names:
        from .errors import ConfigError
        raise ConfigError("no relations to prepare; set test_relations or train_relations")
    summary = {}
    for i, name in enumerate(names):
        r = g.relation_id(name)
        ds, surgered = prepare_dataset(g, r, cfg.lp_l, cfg.split_ratio, cfg.seed + i)
        ds = add_negatives(ds, surgered, cfg.seed + 1000 + i, true_pairs=g.pairs(r))
        d = out / name
        d.mkdir(exist_ok=True)
        for split in ("train", "test"):
            with open(d / f"{split}.tsv", "w", encoding="utf-8") as f:
                for h, t, y in getattr(ds, split):
                    f.write(f"{g.entity_names[h]}\t{g.entity_names[t]}\t{y}\n")
        summary[name] = {s: {"pos": len(ds.positives(s)), "neg": len(ds.negatives(s))} for s in ("train", "test")}
    write_manifest(out, "prepare", cfg, _inputs(cfg), started, {"relations": summary})
    print(json.dumps(summary, indent=2))
    return 0


def cmd_embed(args):
    from .embeddings import build_embeddings, save_embeddings
    started = time.time()
    cfg = _config(args)
    g, _ = _graphs(cfg)
    kw = {"epochs": cfg.embed_epochs} if cfg.embed_method == "transe" else {}
    tab = build_embeddings(g, cfg.embed_method, cfg.d_e, cfg.seed, **kw)
    save_embeddings(args.out, tab)
    write_manifest(args.out, "embed", cfg, _inputs(cfg), started)
    log.info("wrote %s", args.out)
    return 0


def _make_env(cfg, g, s):
    from .env import SchemaEnv
    return SchemaEnv(s, g.n_types, g.n_relations, cfg.max_hops)


def cmd_train(args):
    import numpy as np
    from .embeddings import load_embeddings
    from .policy import PolicyParams, load_checkpoint, save_checkpoint
    from .trainer import Trainer
    started = time.time()
    cfg = _config(args)
    g, _ = _graphs(cfg)
    if not cfg.train_relations:
        from .errors import ConfigError
        raise ConfigError("train_relations is empty")
    emb = load_embeddings(_require(args.embeddings, "embeddings", "run `hinwalk embed` first")).aligned_to(g)
    gt, st = _training_graph(cfg, g, args.dataset)
    env = _make_env(cfg, g, st)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tcfg = cfg.train_config()
    per_relation = cfg.setting == "per-relation-transductive"
    groups = [[n] for n in cfg.train_relations] if per_relation else [list(cfg.train_relations)]
    for names in groups:
        tag = f"model_{names[0]}" if per_relation else "model"
        adam = rng = None
        if args.resume:
            params, adam, rng, _ = load_checkpoint(_require(args.resume, "checkpoint"))
            params.emb = emb
        else:
            params = PolicyParams.init(cfg.d_e, cfg.d_h, seed=cfg.seed, emb=emb)
        tr = Trainer(gt, st, env, params, tcfg, rng=rng or np.random.default_rng(cfg.seed), adam=adam)
        stats = tr.train_multi_relation(_relation_ids(g, names))
        save_checkpoint(out / f"{tag}.npz", tr.params, tr.adam, tr.rng,
                        extra={"relations": names, "rollouts": tr.rollouts})
        stats.write_csv(out / f"{tag}_stats.csv", g.relation_names)
        log.info("%s: final reward %.3f", tag, stats.reward[-1])
    write_manifest(out, "train", cfg, _inputs(cfg) + [args.embeddings], started)
    return 0


def _models_for(cfg, model_dir):
    """relation name -> checkpoint path."""
    d = _require(model_dir, "model directory", "run `hinwalk train` first")
    out = {}
    names = cfg.test_relations or cfg.train_relations
    for n in names:
        p = d / f"model_{n}.npz"
        out[n] = p if p.exists() else d / "model.npz"
        _require(out[n], f"checkpoint for {n}")
    return out


def cmd_infer(args):
    from .inference import mine_metapaths, save_mined
    from .policy import load_checkpoint
    started = time.time()
    cfg = _config(args)
    g, s = _graphs(cfg)
    gt, _ = _training_graph(cfg, g, args.dataset)
    env = _make_env(cfg, g, s)
    mined = []
    cache = {}
    for name, ckpt in _models_for(cfg, args.model).items():
        if ckpt not in cache:
            cache[ckpt] = load_checkpoint(ckpt)[0]
        params = cache[ckpt]
        params.emb = params.emb.aligned_to(g) if params.emb.relation_names else params.emb
        r = g.relation_id(name)
        # inductive relations have no instances in the training graph; score on the full one
        score_g = g if cfg.setting == "multi-relation-inductive" else gt
        ms = mine_metapaths(params, env, score_g, s, r, cfg.beam_width, cfg.query_threshold)
        mined.append(ms)
        log.info("%s: %d meta-paths", name, len(ms))
    save_mined(args.out, mined, g)
    write_manifest(args.out, "infer", cfg, _inputs(cfg), started)
    return 0


def cmd_eval_qa(args):
    from .inference import evaluate_qa, load_mined
    started = time.time()
    cfg = _config(args)
    g, _ = _graphs(cfg)
    mined = load_mined(_require(args.mined, "mined meta-paths", "run `hinwalk infer` first"), g)
    triples = []
    for name in cfg.test_relations or cfg.train_relations:
        ds = _load_dataset(_require(args.dataset, "dataset directory"), g, name)
        triples += [(h, ds.relation, t) for h, t in ds.positives("test")]
    gt, _ = _training_graph(cfg, g, args.dataset)
    metrics, rankings = evaluate_qa(triples, mined, gt)
    out = Path(args.out)
    out.write_text(json.dumps(metrics, indent=2) + "\n")
    with open(out.with_suffix(".ranks.csv"), "w", encoding="utf-8") as f:
        f.write("head,relation,tail,rank\n")
        for q in rankings:
            f.write(f"{g.entity_names[q.head]},{g.relation_names[q.relation]},{g.entity_names[q.gold]},{q.rank}\n")
    write_manifest(out, "eval-qa", cfg, _inputs(cfg) + [args.mined], started)
    print(json.dumps(metrics))
    return 0


def cmd_eval_lp(args):
    from .inference import load_mined
    from .linkpred import SimilarityMode, rescore, run_link_prediction
    started = time.time()
    cfg = _config(args)
    g, _ = _graphs(cfg)
    mined = load_mined(_require(args.mined, "mined meta-paths", "run `hinwalk infer` first"), g)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    for name in cfg.test_relations or cfg.train_relations:
        ds = _load_dataset(_require(args.dataset, "dataset directory"), g, name)
        if ds.relation not in mined:
            from .errors import MissingArtifactError
            raise MissingArtifactError(f"mined meta-paths for {name}", "rerun `hinwalk infer`")
        from .graph import remove_triples
        gr = remove_triples(g, [(h, ds.relation, t) for h, t in ds.positives("test")])
        ms = rescore(mined[ds.relation], gr)
        res = run_link_prediction(ds, ms, gr, SimilarityMode(cfg.similarity), cfg.reg_weight)
        with open(out / f"{name}_scores.csv", "w", encoding="utf-8") as f:
            f.write("head,tail,label,score\n")
            for h, t, y, sc in res.pop("scores"):
                f.write(f"{g.entity_names[h]},{g.entity_names[t]},{y},{sc!r}\n")
        (out / f"{name}.json").write_text(json.dumps(res, indent=2) + "\n")
        results[name] = res
    write_manifest(out, "eval-lp", cfg, _inputs(cfg) + [args.mined], started)
    print(json.dumps(results))
    return 0


def cmd_baseline(args):
    import numpy as np
    from .baselines import SearchBudget, enumerate_metapaths, random_walk_metapaths
    from .graph import Query, queries_for_relation
    from .inference import MinedPathSet, save_mined
    from .metapath import evaluate
    started = time.time()
    cfg = _config(args)
    g, s = _graphs(cfg)
    gt, _ = _training_graph(cfg, g, args.dataset)
    rng = np.random.default_rng(cfg.seed)
    mined = []
    for name in cfg.test_relations or cfg.train_relations:
        r = g.relation_id(name)
        found = set()
        for sp in queries_for_relation(g, s, r, cfg.query_threshold):
            q = Query(sp.src, r, sp.dst)
            if args.method == "enumerate":
                found |= enumerate_metapaths(s, q, cfg.max_hops)
            else:
                found |= random_walk_metapaths(s, q, SearchBudget(args.attempts, cfg.budget_multiplier),
                                               cfg.max_hops, rng)
        score_g = g if cfg.setting == "multi-relation-inductive" else gt
        entries = []
        for m in sorted(found, key=lambda m: m.encoding):
            rec = evaluate(score_g, m, r)
            entries.append((m, rec.coverage, rec.confidence))
        mined.append(MinedPathSet(r, entries).sorted())
    save_mined(args.out, mined, g)
    write_manifest(args.out, "baseline", cfg, _inputs(cfg), started,
                   {"method": args.method, "attempts": args.attempts,
                    "multiplier": cfg.budget_multiplier})
    return 0


def cmd_inductive_study(args):
    from .graph import remove_triples
    from .inference import load_mined
    from .linkpred import SimilarityMode, node_removal_study
    started = time.time()
    cfg = _config(args)
    g, _ = _graphs(cfg)
    mined = load_mined(_require(args.mined, "mined meta-paths", "run `hinwalk infer` first"), g)
    rows = []
    for name in cfg.test_relations or cfg.train_relations:
        ds = _load_dataset(_require(args.dataset, "dataset directory"), g, name)
        gr = remove_triples(g, [(h, ds.relation, t) for h, t in ds.positives("test")])
        for row in node_removal_study(ds, mined[ds.relation], gr, seed=cfg.seed,
                                      mode=SimilarityMode(cfg.similarity)):
            rows.append({"relation": name, "rate": row["rate"], "roc_auc": row["roc_auc"],
                         "ap": row["ap"], "n_removed": row["n_removed"]})
    Path(args.out).write_text(json.dumps(rows, indent=2) + "\n")
    write_manifest(args.out, "inductive-study", cfg, _inputs(cfg) + [args.mined], started)
    print(render_table(rows))
    return 0


def render_table(rows) -> str:
    """Aligned text table for a list of flat dicts."""
    rows = list(rows)
    if not rows:
        return "(no rows)"
    cols = list(dict.fromkeys(k for r in rows for k in r))

    def fmt(v):
        return f"{v:.3f}" if isinstance(v, float) else str(v)

    cells = [[fmt(r.get(c, "")) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    line = "  ".join(c.ljust(w) for c, w in zip(cols, widths))
    sep = "  ".join("-" * w for w in widths)
    body = ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join([line, sep] + body)


def cmd_report(args):
    rows = []
    for p in args.inputs:
        data = json.loads(Path(_require(p, "metrics file")).read_text())
        if isinstance(data, list):
            rows += data
        elif all(isinstance(v, dict) for v in data.values()):
            rows += [{"name": k, **v} for k, v in data.items()]
        else:
            rows.append({"name": Path(p).stem, **data})
    print(render_table(rows))
    return 0


def cmd_fixture(args):
    """Write one of the built-in synthetic graphs as TSV files."""
    from . import synthetic
    from .graph import load_toy, write_instance_graph
    from .errors import ConfigError
    makers = {
        "toy": lambda: load_toy(),
        "convergence": lambda: synthetic.convergence_fixture(args.seed).graph,
        "inductive": lambda: synthetic.inductive_fixture(args.seed).graph,
        "complex": lambda: synthetic.complex_fixture(args.seed).graph,
        "similarity": lambda: synthetic.similarity_fixture(args.seed).graph,
        "guiding": lambda: synthetic.guiding_example().graph,
    }
    if args.name not in makers:
        raise ConfigError(f"unknown fixture {args.name!r}; choose from {', '.join(makers)}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_instance_graph(makers[args.name](), out / "triples.tsv", out / "types.tsv", out / "relations.txt")
    print(out)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hinwalk", description="Meta-path learning on heterogeneous graphs.")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--threads", type=int, default=None, help="numeric library threads (default: all cores)")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def common(sp, out=True):
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--triples")
        sp.add_argument("--types")
        sp.add_argument("--relations")
        sp.add_argument("--schema")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--setting")
        sp.add_argument("--beam-width", dest="beam_width", type=int)
        if out:
            sp.add_argument("--out", required=True)

    sp = sub.add_parser("prepare", help="build link-prediction train/test splits")
    common(sp)
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("embed", help="train or sample type/relation embeddings")
    common(sp)
    sp.set_defaults(func=cmd_embed)

    sp = sub.add_parser("train", help="train the walking policy")
    common(sp)
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--dataset", help="prepared dataset dir; its test facts are hidden from training")
    sp.add_argument("--resume", help="checkpoint to continue from")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("infer", help="mine meta-paths with beam search")
    common(sp)
    sp.add_argument("--model", required=True, help="directory written by `train`")
    sp.add_argument("--dataset")
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("eval-qa", help="tail-entity ranking metrics")
    common(sp)
    sp.add_argument("--mined", required=True)
    sp.add_argument("--dataset", required=True)
    sp.set_defaults(func=cmd_eval_qa)

    sp = sub.add_parser("eval-lp", help="link-prediction ROC-AUC / AP")
    common(sp)
    sp.add_argument("--mined", required=True)
    sp.add_argument("--dataset", required=True)
    sp.set_defaults(func=cmd_eval_lp)

    sp = sub.add_parser("baseline", help="random-walk or enumeration meta-paths")
    common(sp)
    sp.add_argument("--method", choices=("random-walk", "enumerate"), default="random-walk")
    sp.add_argument("--attempts", type=int, default=1000)
    sp.add_argument("--dataset")
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("inductive-study", help="link prediction under node removal")
    common(sp)
    sp.add_argument("--mined", required=True)
    sp.add_argument("--dataset", required=True)
    sp.set_defaults(func=cmd_inductive_study)

    sp = sub.add_parser("report", help="render metric JSON files as a table")
    sp.add_argument("inputs", nargs="+")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("fixture", help="write a built-in synthetic graph")
    sp.add_argument("name")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_fixture)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .errors import HinError
    try:
        return args.func(args)
    except HinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
