"""Command-line interface: ingest -> graph -> stats -> train -> eval ->
perturb -> cues, one subcommand each.

Exit codes: 0 success, 1 validation/data error, 2 usage error.  Every
command is seeded (default seed 0) and writes machine-readable output to
--out; identical invocations produce byte-identical files.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor

from .corpus import CorpusError, Label, load_corpus, save_corpus
from .encoder import EncoderConfig, load_checkpoint, save_checkpoint
from .evaluation import (PerturbKind, PerturbSpec, cue_stats, evaluate,
                         pair_documents, perturb, UnpairedDocument)
from .graph import GraphLimits, build_graph, graph_record, merged_adjacency
from .stats import corpus_report, core_decomposition, graph_report
from .trainer import SingleClassDataset, TrainConfig, predict, train

CONFIG_KEYS = {
    "alpha": float, "tau": float, "momentum": float, "reweight_beta": float,
    "bank_size": int, "batch_size": int, "lr": float, "weight_decay": float,
    "max_epochs": int, "patience": int, "seed": int, "embed_dim": int,
    "hidden_dim": int, "gamma": float, "max_nodes": int, "max_sentences": int,
}


def parse_config_file(path: str) -> dict:
    """Flat key=value lines; blank lines and # comments are ignored."""
    values: dict = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key=value")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in CONFIG_KEYS:
                raise ValueError(f"{path}:{line_no}: unknown key {key!r}")
            try:
                values[key] = CONFIG_KEYS[key](value.strip())
            except ValueError:
                raise ValueError(f"{path}:{line_no}: bad value for {key!r}") from None
    return values


def build_configs(values: dict, seed_override: int | None = None
                  ) -> tuple[TrainConfig, EncoderConfig, GraphLimits]:
    seed = seed_override if seed_override is not None else values.get("seed", 0)
    train_cfg = TrainConfig(
        alpha=values.get("alpha", 0.6),
        tau=values.get("tau", 0.2),
        momentum=values.get("momentum", 0.99),
        reweight_beta=values.get("reweight_beta", 1.0),
        bank_size=values.get("bank_size"),
        batch_size=values.get("batch_size", 8),
        lr=values.get("lr", 1e-5),
        weight_decay=values.get("weight_decay", 0.01),
        max_epochs=values.get("max_epochs", 20),
        patience=values.get("patience", 5),
        seed=seed,
    )
    encoder_cfg = EncoderConfig(
        embed_dim=values.get("embed_dim", 64),
        hidden_dim=values.get("hidden_dim", 64),
        gamma=values.get("gamma", 1.0),
        seed=seed,
    )
    limits = GraphLimits(max_nodes=values.get("max_nodes", 90),
                         max_sentences=values.get("max_sentences", 45))
    return train_cfg, encoder_cfg, limits


def _limits_from_args(args) -> GraphLimits:
    if args.uncapped:
        return GraphLimits(max_nodes=10 ** 9, max_sentences=10 ** 9)
    return GraphLimits(max_nodes=args.max_nodes, max_sentences=args.max_sentences)


def _parallel_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _doc_seed(base: int, doc_id: str) -> int:
    digest = hashlib.blake2b(f"{base}:{doc_id}".encode("utf-8"),
                             digest_size=8).digest()
    return int.from_bytes(digest, "big")


def cmd_ingest(args) -> int:
    docs = load_corpus(args.corpus)
    save_corpus(docs, args.out)
    counts = {label.value: sum(1 for d in docs if d.label is label)
              for label in Label}
    print(f"validated {len(docs)} documents "
          f"({counts['human']} human, {counts['machine']} machine)")
    return 0


def cmd_graph(args) -> int:
    docs = load_corpus(args.corpus)
    limits = _limits_from_args(args)
    graphs = _parallel_map(lambda d: build_graph(d, limits), docs, args.threads)
    with open(args.out, "w", encoding="utf-8") as fh:
        for doc, g in zip(docs, graphs):
            fh.write(json.dumps(graph_record(doc.id, g)))
            fh.write("\n")
    print(f"wrote {len(docs)} graphs")
    return 0


def cmd_stats(args) -> int:
    docs = load_corpus(args.corpus)
    limits = _limits_from_args(args)
    graphs = _parallel_map(lambda d: build_graph(d, limits), docs, args.threads)
    gs_hwt = [g for d, g in zip(docs, graphs) if d.label is Label.HWT]
    gs_mgt = [g for d, g in zip(docs, graphs) if d.label is Label.MGT]
    report = corpus_report(gs_hwt, gs_mgt)
    record = {
        "hwt": report["hwt"].to_record(),
        "mgt": report["mgt"].to_record(),
        "jsd_degree": report["jsd_degree"],
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2)
        fh.write("\n")
    if args.dump:
        _write_stats_dump(args.dump, {"human": gs_hwt, "machine": gs_mgt})
    print(f"hwt avg_degree={record['hwt']['avg_degree']:.4f} "
          f"mgt avg_degree={record['mgt']['avg_degree']:.4f} "
          f"jsd_degree={record['jsd_degree']:.4f}")
    return 0


def _write_stats_dump(path: str, classes: dict) -> None:
    """Long-format TSV: per-node degrees and core numbers, per-graph
    average degree, degeneracy, and entropy, one value per row."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("class\tmetric\tvalue\n")
        for cls, graphs in classes.items():
            for g in graphs:
                if g.n_nodes == 0:
                    continue
                report = graph_report(g)
                cores, _ = core_decomposition(g)
                for d in merged_adjacency(g).sum(axis=1):
                    fh.write(f"{cls}\tdegree\t{int(d)}\n")
                for c in cores:
                    fh.write(f"{cls}\tcore_number\t{c}\n")
                fh.write(f"{cls}\tavg_degree\t{report.avg_degree}\n")
                fh.write(f"{cls}\tdegeneracy\t{report.degeneracy}\n")
                fh.write(f"{cls}\tentropy\t{report.structure_entropy}\n")


def cmd_train(args) -> int:
    docs = load_corpus(args.corpus)
    values = parse_config_file(args.config) if args.config else {}
    train_cfg, encoder_cfg, limits = build_configs(values, args.seed)
    result = train(docs, train_cfg, encoder_cfg, limits)
    with open(args.out, "w", encoding="utf-8") as fh:
        for record in result.metrics:
            fh.write(json.dumps(record))
            fh.write("\n")
    if args.checkpoint:
        save_checkpoint(args.checkpoint, result.params, encoder_cfg, limits)
    print(f"best epoch {result.best_epoch}: "
          f"val_accuracy={result.best_val_accuracy:.4f}")
    return 0


def cmd_eval(args) -> int:
    docs = load_corpus(args.corpus)
    params, encoder_cfg, limits = load_checkpoint(args.checkpoint)

    def one(doc):
        labels, probabilities = predict([doc], params, encoder_cfg, limits)
        return labels[0], float(probabilities[0])

    results = _parallel_map(one, docs, args.threads)
    preds = [label for label, _ in results]
    probs = [p for _, p in results]
    report = evaluate(preds, [d.label for d in docs])
    record = report.to_record()
    record["probabilities"] = {d.id: p for d, p in zip(docs, probs)}
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2)
        fh.write("\n")
    print(f"accuracy={report.accuracy:.4f} f1={report.f1:.4f} n={report.n}")
    return 0


def cmd_perturb(args) -> int:
    docs = load_corpus(args.corpus)
    vocab = sorted({t for d in docs for t in d.tokens})
    kind = PerturbKind(args.perturb_kind)
    base_seed = args.seed if args.seed is not None else 0

    def one(doc):
        spec = PerturbSpec(kind=kind, scale=args.perturb_scale,
                           seed=_doc_seed(base_seed, doc.id))
        return perturb(doc, spec, vocab)

    perturbed = _parallel_map(one, docs, args.threads)
    save_corpus(perturbed, args.out)
    print(f"perturbed {len(docs)} documents ({kind.value}, "
          f"scale {args.perturb_scale})")
    return 0


def cmd_cues(args) -> int:
    docs = load_corpus(args.corpus)
    pairs = pair_documents(docs)
    stats = cue_stats(pairs)
    rows = [(tok, row) for tok, row in stats.rows.items()
            if row.applicability > 0]
    rows.sort(key=lambda item: (-item[1].productivity, -item[1].applicability,
                                item[0]))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("token\tapplicability\tproductivity\tcoverage\n")
        for tok, row in rows:
            fh.write(f"{tok}\t{row.applicability}\t{row.productivity}"
                     f"\t{row.coverage}\n")
    print(f"{len(pairs)} pairs, {len(rows)} applicable cues")
    return 0


def _add_common(parser, corpus=True, out=True):
    if corpus:
        parser.add_argument("--corpus", required=True, help="corpus file path")
    if out:
        parser.add_argument("--out", required=True, help="output file path")
    # None means "not given": train falls back to the config file's seed,
    # everything else to 0
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=1)


def _add_limits(parser):
    parser.add_argument("--max-nodes", type=int, default=90)
    parser.add_argument("--max-sentences", type=int, default=45)
    parser.add_argument("--uncapped", action="store_true",
                        help="recompute without graph caps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cohdet",
        description="entity-coherence graphs for machine-generated text detection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and normalize a corpus")
    _add_common(p)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("graph", help="dump coherence graphs")
    _add_common(p)
    _add_limits(p)
    p.set_defaults(fn=cmd_graph)

    p = sub.add_parser("stats", help="class-level graph statistics report")
    _add_common(p)
    _add_limits(p)
    p.add_argument("--dump", help="also write a long-format value dump (TSV)")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("train", help="train the detector")
    _add_common(p)
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--checkpoint", help="where to save trained parameters")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("perturb", help="write a perturbed copy of a corpus")
    _add_common(p)
    p.add_argument("--perturb-kind", required=True,
                   choices=[k.value for k in PerturbKind])
    p.add_argument("--perturb-scale", type=float, default=0.15)
    p.set_defaults(fn=cmd_perturb)

    p = sub.add_parser("cues", help="token cue productivity/coverage table")
    _add_common(p)
    p.set_defaults(fn=cmd_cues)

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (CorpusError, UnpairedDocument, SingleClassDataset, ValueError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
