"""Pipeline CLI: composable subcommands sharing one config and workdir.

Every subcommand reads its declared upstream artifacts, writes its outputs
under the workdir, and records a JSON run manifest with input/output
checksums. Outputs carry no wall-clock fields, so a rerun with unchanged
inputs is byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import random
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import (
    build_feature_matrix,
    evaluate_weighted_prf,
    pca_project,
    per_pair_polarity,
    pool_all,
    rank_aeps,
    rank_pairs,
    read_embeddings,
    write_embeddings,
)
from .classifiers import CLASSIFIER_KINDS, train_classifier
from .config import PipelineConfig, load_config
from .contexts import EntityPair, extract_context_sentences, read_contexts, write_contexts
from .corpus import (
    labels_by_source,
    load_articles,
    load_corpus,
    load_labels,
    save_corpus,
)
from .encoder import ContextEncoder, sample_triplets, train, write_loss_curve
from .entities import (
    load_anchor_table,
    load_catalog,
    read_anchor_tsv,
    save_anchor_table,
    save_catalog,
    top_k_entities,
)
from .fileio import read_json, sha256_file, write_json
from .probe import PredicateProber, load_lexicon, select_predicates

logger = logging.getLogger("newslens")

SUBCOMMANDS = (
    "ingest", "build-anchors", "link-stats", "extract", "train-encoder",
    "embed", "classify", "rank-aeps", "heatmap", "probe", "pca", "report",
)

_PRODUCERS = {
    "corpus": ("ingested corpus", "ingest"),
    "labels.csv": ("source labels", "ingest"),
    "anchors.tsv": ("anchor table", "build-anchors"),
    "entities.csv": ("entity catalog", "link-stats"),
    "contexts.jsonl": ("context sentences", "extract"),
    "encoder.bin": ("trained encoder", "train-encoder"),
    "loss_curve.csv": ("trained encoder", "train-encoder"),
    "embeddings.jsonl": ("source embeddings", "embed"),
    "metrics.json": ("classifier metrics", "classify"),
    "aep_ranking.csv": ("divergence ranking", "rank-aeps"),
}


class CliError(Exception):
    def __init__(self, message: str, hint: str | None = None, code: str = "error"):
        super().__init__(message)
        self.hint = hint
        self.code = code


@dataclass
class Workspace:
    cfg: PipelineConfig
    workdir: Path

    def path(self, name: str) -> Path:
        return self.workdir / name

    def require(self, name: str) -> Path:
        p = self.path(name)
        if not p.exists():
            what, producer = _PRODUCERS.get(name, (name, "an upstream subcommand"))
            raise CliError(
                f"requires {what}; run {producer}",
                hint=f"expected {p}",
                code="missing-artifact",
            )
        return p

    def _relkey(self, p: Path) -> str:
        try:
            return str(p.relative_to(self.workdir))
        except ValueError:
            return str(p)

    def manifest(self, subcommand: str, inputs: list[Path], outputs: list[Path]) -> None:
        # Keys are workdir-relative and the workdir name itself is excluded,
        # so identically configured runs in different directories compare equal.
        config = {k: v for k, v in sorted(self.cfg.flat().items()) if k != "paths.workdir"}
        payload = {
            "schema": "newslens.manifest.v1",
            "subcommand": subcommand,
            "version": __version__,
            "seed": self.cfg.seed,
            "config": config,
            "inputs": {self._relkey(p): sha256_file(p) for p in inputs if p.is_file()},
            "outputs": {self._relkey(p): sha256_file(p) for p in outputs},
        }
        write_json(self.workdir / "manifest" / f"{subcommand}.json", payload)


def _labels3(ws: Workspace) -> dict[str, str]:
    labels = load_labels(ws.require("labels.csv"))
    return {s: lab.rating3 for s, lab in labels_by_source(labels).items()}


def _write_csv(path: Path, schema: str, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(f"# schema={schema}\n" + buf.getvalue(), encoding="utf-8")


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_ingest(ws: Workspace) -> list[Path]:
    if not ws.cfg.paths.corpus:
        raise CliError("paths.corpus is not set", hint="pass --set paths.corpus=FILE")
    src = Path(ws.cfg.paths.corpus)
    if not src.exists():
        raise CliError(f"corpus file not found: {src}")
    handle = load_articles(src)
    for err in handle.errors[:20]:
        logger.warning("invalid record at line %d: %s", err.line, err.message)
    if handle.errors:
        logger.warning("%d invalid records reported", len(handle.errors))
    corpus_dir = save_corpus(handle, ws.path("corpus"))
    outputs = [corpus_dir / "articles.jsonl", corpus_dir / "manifest.json"]
    inputs = [src]
    if ws.cfg.paths.labels:
        labels = load_labels(ws.cfg.paths.labels)
        rows = [[l.source_id, l.rating5, l.provenance] for l in labels]
        _write_csv(
            ws.path("labels.csv"), "newslens.labels.v1",
            ["source_id", "rating5", "provenance"], rows,
        )
        outputs.append(ws.path("labels.csv"))
        inputs.append(Path(ws.cfg.paths.labels))
    logger.info("ingested %d articles from %d sources (%d errors)",
                handle.article_count, len(handle.source_index), len(handle.errors))
    ws.manifest("ingest", inputs, outputs)
    return outputs


def cmd_build_anchors(ws: Workspace) -> list[Path]:
    if not ws.cfg.paths.anchors:
        raise CliError("paths.anchors is not set", hint="pass --set paths.anchors=FILE")
    src = Path(ws.cfg.paths.anchors)
    if not src.exists():
        raise CliError(f"anchor triples file not found: {src}")
    table = read_anchor_tsv(src, ws.cfg.linking.anchors_format, ws.cfg.linking.prune_total)
    out = ws.path("anchors.tsv")
    save_anchor_table(table, out)
    logger.info("anchor table: %d mentions (%d skipped rows)", len(table), table.skipped)
    outputs = [out, Path(str(out) + ".manifest.json")]
    ws.manifest("build-anchors", [src], outputs)
    return outputs


def cmd_link_stats(ws: Workspace) -> list[Path]:
    corpus_dir = ws.require("corpus")
    table = load_anchor_table(ws.require("anchors.tsv"))
    handle = load_corpus(corpus_dir)
    catalog = top_k_entities(
        handle, table, ws.cfg.linking.catalog_k, ws.cfg.extract.include_titles
    )
    out = ws.path("entities.csv")
    save_catalog(catalog, out)
    logger.info("catalog: %d entities (k=%d)", len(catalog), ws.cfg.linking.catalog_k)
    ws.manifest("link-stats", [corpus_dir / "articles.jsonl", ws.path("anchors.tsv")], [out])
    return [out]


def cmd_extract(ws: Workspace) -> list[Path]:
    catalog = load_catalog(ws.require("entities.csv"))
    corpus_dir = ws.require("corpus")
    table = load_anchor_table(ws.require("anchors.tsv"))
    handle = load_corpus(corpus_dir)
    sets = extract_context_sentences(
        handle, catalog, table,
        include_titles=ws.cfg.extract.include_titles,
        max_entities=ws.cfg.extract.max_entities,
        min_tokens=ws.cfg.extract.min_tokens,
        threads=ws.cfg.threads,
    )
    out = ws.path("contexts.jsonl")
    write_contexts(sets, out)
    logger.info("extracted %d context sets, %d sentences",
                len(sets), sum(len(s) for s in sets))
    ws.manifest("extract", [corpus_dir / "articles.jsonl", ws.path("entities.csv")], [out])
    return [out]


def cmd_train_encoder(ws: Workspace) -> list[Path]:
    sets = read_contexts(ws.require("contexts.jsonl"))
    cfg = ws.cfg.encoder
    cfg.seed = ws.cfg.seed
    logger.info("train-encoder using seed %d", cfg.seed)
    triplets = sample_triplets(
        sets,
        per_anchor=cfg.triplets_per_anchor,
        seed=cfg.seed,
        positives=cfg.positives,
        negative_overlap=cfg.negative_overlap,
    )
    encoder = ContextEncoder(cfg)
    curve = train(encoder, triplets)
    enc_path = ws.path("encoder.bin")
    encoder.save(enc_path)
    curve_path = ws.path("loss_curve.csv")
    write_loss_curve(curve, curve_path)
    ws.manifest("train-encoder", [ws.path("contexts.jsonl")], [enc_path, curve_path])
    return [enc_path, curve_path]


def cmd_embed(ws: Workspace) -> list[Path]:
    sets = read_contexts(ws.require("contexts.jsonl"))
    encoder = ContextEncoder.load(ws.require("encoder.bin"))
    embeddings = pool_all(sets, encoder, threads=ws.cfg.threads)
    out = ws.path("embeddings.jsonl")
    write_embeddings(embeddings, out)
    logger.info("pooled %d (source, pair) embeddings", len(embeddings))
    ws.manifest("embed", [ws.path("contexts.jsonl"), ws.path("encoder.bin")], [out])
    return [out]


def _classifier_params(ws: Workspace, kind: str) -> dict:
    a = ws.cfg.analytics
    return {
        "lasso-logistic": {"C": a.lasso_c},
        "ridge-logistic": {"alpha": a.ridge_alpha},
        "linear-svm": {"C": a.svm_c},
        "rbf-svm": {"C": a.rbf_c, "gamma": a.rbf_gamma},
    }[kind]


def _train_test_split(ws: Workspace, row_sources: list[str]) -> tuple[list[str], list[str]]:
    labels = load_labels(ws.require("labels.csv"))
    by_source = labels_by_source(labels)
    labeled = [s for s in row_sources if s in by_source]
    explicit = [s for s in ws.cfg.analytics.holdout if s in labeled]
    if explicit:
        test = explicit
        train_srcs = [s for s in labeled if s not in set(test)]
        return train_srcs, test
    provs = {l.provenance for l in labels}
    if "allsides" in provs and "mbfc" in provs:
        allsides = {l.source_id for l in labels if l.provenance == "allsides"}
        train_srcs = [s for s in labeled if s in allsides]
        test = [s for s in labeled if s not in allsides]
        if train_srcs and test:
            return train_srcs, test
    rng = random.Random(ws.cfg.seed)
    shuffled = list(labeled)
    rng.shuffle(shuffled)
    n_test = max(1, int(len(shuffled) * ws.cfg.analytics.holdout_frac))
    test = sorted(shuffled[:n_test])
    train_srcs = sorted(shuffled[n_test:])
    return train_srcs, test


def cmd_classify(ws: Workspace) -> list[Path]:
    embeddings = read_embeddings(ws.require("embeddings.jsonl"))
    labels3 = _labels3(ws)
    rows = build_feature_matrix(
        embeddings, k=ws.cfg.analytics.k, min_support=ws.cfg.analytics.min_support
    )
    by_source = {r.source_id: r for r in rows}
    train_srcs, test_srcs = _train_test_split(ws, sorted(by_source))
    if not train_srcs or not test_srcs:
        raise CliError("classify needs both training and held-out labeled sources")
    X_train = np.array([by_source[s].vector for s in train_srcs])
    y_train = np.array([labels3[s] for s in train_srcs], dtype=object)
    X_test = np.array([by_source[s].vector for s in test_srcs])
    y_test = [labels3[s] for s in test_srcs]
    logger.info("classify using seed %d (%d train, %d test sources)",
                ws.cfg.seed, len(train_srcs), len(test_srcs))
    results = {}
    for kind in CLASSIFIER_KINDS:
        model = train_classifier(
            X_train, y_train, kind, seed=ws.cfg.seed, **_classifier_params(ws, kind)
        )
        pred = model.predict(X_test)
        p, r, f1 = evaluate_weighted_prf(pred, y_test)
        results[kind] = {"precision": p, "recall": r, "f1": f1}
        logger.info("%s: P=%.2f R=%.2f F1=%.2f", kind, p, r, f1)
    out = ws.path("metrics.json")
    write_json(
        out,
        {
            "schema": "newslens.metrics.v1",
            "k": ws.cfg.analytics.k,
            "train_sources": train_srcs,
            "test_sources": test_srcs,
            "classifiers": results,
        },
    )
    ws.manifest("classify", [ws.path("embeddings.jsonl"), ws.path("labels.csv")], [out])
    return [out]


def cmd_rank_aeps(ws: Workspace) -> list[Path]:
    embeddings = read_embeddings(ws.require("embeddings.jsonl"))
    labels3 = _labels3(ws)
    a = ws.cfg.analytics
    scores, skipped = rank_aeps(
        embeddings, labels3,
        top_pairs=a.top_pairs, min_group=a.min_group, shrinkage=a.shrinkage,
        symmetrized=a.symmetrized, reduce=a.reduce,
    )
    rows = [
        [rank, s.pair.first, s.pair.second, _fmt(s.divergence), s.n_left, s.n_right]
        for rank, s in enumerate(scores, start=1)
    ]
    out = ws.path("aep_ranking.csv")
    _write_csv(out, "newslens.aep-ranking.v1",
               ["rank", "e1", "e2", "divergence", "n_left", "n_right"], rows)
    skipped_path = ws.path("aep_skipped.csv")
    _write_csv(
        skipped_path, "newslens.aep-skipped.v1", ["e1", "e2", "reason"],
        [[p.first, p.second, reason] for p, reason in skipped],
    )
    logger.info("ranked %d pairs (%d skipped)", len(scores), len(skipped))
    ws.manifest("rank-aeps", [ws.path("embeddings.jsonl"), ws.path("labels.csv")],
                [out, skipped_path])
    return [out, skipped_path]


def _read_aep_pairs(path: Path) -> list[EntityPair]:
    pairs = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(ln for ln in fh if not ln.startswith("#"))
        for row in reader:
            pairs.append(EntityPair.of(row["e1"], row["e2"]))
    return pairs


def _default_holdout(embeddings, labels3, n: int = 5) -> list[str]:
    totals: dict[str, int] = {}
    for emb in embeddings:
        if emb.source_id in labels3:
            totals[emb.source_id] = totals.get(emb.source_id, 0) + emb.support
    ranked = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))
    return [s for s, _ in ranked[:n]]


def cmd_heatmap(ws: Workspace) -> list[Path]:
    embeddings = read_embeddings(ws.require("embeddings.jsonl"))
    labels3 = _labels3(ws)
    pairs = _read_aep_pairs(ws.require("aep_ranking.csv"))[: ws.cfg.analytics.heatmap_pairs]
    if not pairs:
        raise CliError("divergence ranking is empty; nothing to plot")
    holdout = list(ws.cfg.analytics.holdout) or _default_holdout(embeddings, labels3)
    logger.info("heatmap using seed %d, %d held-out sources", ws.cfg.seed, len(holdout))
    matrix = per_pair_polarity(
        embeddings, labels3, pairs, holdout,
        min_group=ws.cfg.analytics.min_group,
        min_sentences=ws.cfg.analytics.heatmap_min_sentences,
        svm_c=ws.cfg.analytics.svm_c,
        seed=ws.cfg.seed,
    )
    header = ["source", "label3"] + [str(p) for p in pairs]
    rows = [
        [source, labels3.get(source, "n/a")] + [matrix[source][p] for p in pairs]
        for source in sorted(matrix)
    ]
    out = ws.path("heatmap.csv")
    _write_csv(out, "newslens.heatmap.v1", header, rows)
    ws.manifest("heatmap", [ws.path("embeddings.jsonl"), ws.path("aep_ranking.csv")], [out])
    return [out]


def cmd_probe(ws: Workspace) -> list[Path]:
    if not ws.cfg.paths.lexicon:
        raise CliError("paths.lexicon is not set", hint="pass --set paths.lexicon=FILE")
    lex_path = Path(ws.cfg.paths.lexicon)
    if not lex_path.exists():
        raise CliError(f"lexicon file not found: {lex_path}")
    embeddings = read_embeddings(ws.require("embeddings.jsonl"))
    encoder = ContextEncoder.load(ws.require("encoder.bin"))
    handle = load_corpus(ws.require("corpus"))
    labels3 = _labels3(ws)
    predicates = select_predicates(
        load_lexicon(lex_path), handle, ws.cfg.probe.n_per_class
    )
    prober = PredicateProber(
        predicates, encoder,
        top_k=ws.cfg.probe.top_k,
        temperature=ws.cfg.probe.temperature,
        average_orderings=ws.cfg.probe.average_orderings,
    )
    top = set(rank_pairs(embeddings)[: ws.cfg.probe.probe_pairs])
    rows = []
    for emb in sorted(embeddings, key=lambda e: (e.pair, e.source_id)):
        if emb.pair not in top:
            continue
        result = prober.score(emb)
        tops = ";".join(f"{v}:{w:.6f}" for v, w in result.top_predicates)
        rows.append([
            emb.source_id, labels3.get(emb.source_id, "n/a"),
            emb.pair.first, emb.pair.second, _fmt(result.score), tops,
        ])
    out = ws.path("probe.csv")
    _write_csv(out, "newslens.probe.v1",
               ["source", "label3", "e1", "e2", "score", "top_predicates"], rows)
    ws.manifest(
        "probe",
        [ws.path("embeddings.jsonl"), ws.path("encoder.bin"), lex_path],
        [out],
    )
    return [out]


def _pair_slug(pair: EntityPair) -> str:
    safe = lambda s: "".join(c if c.isalnum() else "-" for c in s)
    return f"{safe(pair.first)}__{safe(pair.second)}"


def cmd_pca(ws: Workspace) -> list[Path]:
    embeddings = read_embeddings(ws.require("embeddings.jsonl"))
    labels3 = _labels3(ws)
    pairs = rank_pairs(embeddings)[: ws.cfg.analytics.pca_pairs]
    pca_dir = ws.path("pca")
    pca_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    index = []
    components = ws.cfg.analytics.pca_components
    for pair in pairs:
        subset = sorted(
            (e for e in embeddings if e.pair == pair), key=lambda e: e.source_id
        )
        if len(subset) < components + 1:
            index.append({"pair": str(pair), "file": None,
                          "reason": f"needs >= {components + 1} sources"})
            continue
        coords, ratios = pca_project(np.array([e.array() for e in subset]), components)
        rows = [
            [e.source_id, labels3.get(e.source_id, "n/a")] + [_fmt(c) for c in coord]
            for e, coord in zip(subset, coords)
        ]
        out = pca_dir / f"{_pair_slug(pair)}.csv"
        header = ["source", "label3"] + [f"pc{i + 1}" for i in range(components)]
        _write_csv(out, "newslens.pca.v1", header, rows)
        outputs.append(out)
        index.append({
            "pair": str(pair),
            "file": out.name,
            "explained_variance": [float(r) for r in ratios],
        })
    index_path = pca_dir / "index.json"
    write_json(index_path, {"schema": "newslens.pca-index.v1", "pairs": index})
    outputs.append(index_path)
    ws.manifest("pca", [ws.path("embeddings.jsonl")], outputs)
    return outputs


def cmd_report(ws: Workspace) -> list[Path]:
    metrics = read_json(ws.require("metrics.json"))
    aep_path = ws.require("aep_ranking.csv")
    aep_rows = []
    with open(aep_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(ln for ln in fh if not ln.startswith("#"))
        for row in reader:
            aep_rows.append(
                {
                    "rank": int(row["rank"]),
                    "e1": row["e1"],
                    "e2": row["e2"],
                    "divergence": float(row["divergence"]),
                    "n_left": int(row["n_left"]),
                    "n_right": int(row["n_right"]),
                }
            )
    figures = {}
    for name, rel in (("heatmap", "heatmap.csv"), ("probe", "probe.csv"), ("pca", "pca")):
        figures[name] = rel if ws.path(rel).exists() else None
    out = ws.path("report.json")
    write_json(
        out,
        {
            "schema": "newslens.report.v1",
            "metrics": metrics,
            "aep_ranking": aep_rows,
            "figures": figures,
        },
    )
    ws.manifest("report", [ws.path("metrics.json"), aep_path], [out])
    return [out]


_HANDLERS = {
    "ingest": cmd_ingest,
    "build-anchors": cmd_build_anchors,
    "link-stats": cmd_link_stats,
    "extract": cmd_extract,
    "train-encoder": cmd_train_encoder,
    "embed": cmd_embed,
    "classify": cmd_classify,
    "rank-aeps": cmd_rank_aeps,
    "heatmap": cmd_heatmap,
    "probe": cmd_probe,
    "pca": cmd_pca,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="newslens",
        description="Discover source content-selection preferences from entity-pair contexts.",
    )
    parser.add_argument("--version", action="version", version=f"newslens {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--workdir", help="artifact directory (or $NEWSLENS_WORKDIR)")
        p.add_argument("--seed", type=int, help="global seed override")
        p.add_argument("--threads", type=int, help="internal parallelism cap")
        p.add_argument(
            "--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
            help="override any config key (repeatable)",
        )
    return parser


def run_subcommand(name: str, cfg: PipelineConfig) -> list[Path]:
    workdir = Path(cfg.paths.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    ws = Workspace(cfg=cfg, workdir=workdir)
    return _HANDLERS[name](ws)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        if args.workdir:
            cfg.paths.workdir = args.workdir
        elif os.environ.get("NEWSLENS_WORKDIR"):
            cfg.paths.workdir = os.environ["NEWSLENS_WORKDIR"]
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads is not None:
            cfg.threads = args.threads
        run_subcommand(args.subcommand, cfg)
    except CliError as exc:
        print(
            json.dumps({"error": exc.code, "message": str(exc), "hint": exc.hint}),
            file=sys.stderr,
        )
        return 1
    except (ValueError, OSError, KeyError) as exc:
        print(
            json.dumps({"error": "error", "message": str(exc), "hint": None}),
            file=sys.stderr,
        )
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
