"""Command-line entry point: anchors -> map / ls -> train -> stitch-eval, plus synth."""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._util import default_threads, sha256_file
from .classifier import (
    TrainConfig,
    evaluate_macro_f1,
    load_dataset,
    load_model,
    read_label_map,
    save_model,
    stitch,
    train,
)
from .embeddings import load_vec_file, save_vec_file
from .lexicon import (
    build_anchor_set,
    filter_by_score,
    load_lexicon,
    load_stopwords,
    read_anchor_tsv,
    remove_stopwords,
    sample_anchors,
    write_anchor_tsv,
)
from .mapping import (
    anchor_embeddings,
    ls_fit,
    ls_project,
    map_table,
    read_metadata,
    write_metadata,
)
from .relrep import DEFAULT_K, SCHEMES, WeightingScheme, topk_rows, write_topk_tsv
from .synth import METHODS, SynthScenario, report_json, report_tsv, run_end_to_end

logger = logging.getLogger("rrstitch")

MANIFEST_SUFFIX = ".manifest.json"


class CommandError(Exception):
    """A user-facing failure; reported without a traceback."""


class Outputs:
    """Collects output files written to temporary paths; renamed into place
    only when the whole command succeeds, deleted otherwise."""

    def __init__(self):
        self._pending = []

    def path(self, final):
        final = str(final)
        tmp = f"{final}.partial-{os.getpid()}"
        self._pending.append((tmp, final))
        return tmp

    def commit(self):
        for tmp, final in self._pending:
            os.replace(tmp, final)
        self._pending = []

    def discard(self):
        for tmp, _ in self._pending:
            if os.path.exists(tmp):
                os.remove(tmp)
        self._pending = []

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.commit()
        else:
            self.discard()
        return False


def write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def manifest(args, inputs, outputs, anchor_checksum=None):
    """Everything needed to reproduce a run. Worker count is deliberately
    absent: it never changes results."""
    params = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("func", "threads", "verbose") and not k.startswith("out")
    }
    return {
        "tool": "rrstitch",
        "version": __version__,
        "command": args.command,
        "params": params,
        "inputs": {name: {"file": Path(p).name, "sha256": sha256_file(p)} for name, p in inputs.items()},
        "outputs": [Path(p).name for p in outputs],
        "anchor_checksum": anchor_checksum,
        "seed": getattr(args, "seed", None),
    }


def write_manifest(out, primary, data):
    write_text(out.path(str(primary) + MANIFEST_SUFFIX), json.dumps(data, indent=1, sort_keys=True) + "\n")


def check_anchor_manifest(anchors_path, src_vec, tgt_vec):
    """Refuse anchors extracted from different embedding files."""
    mpath = str(anchors_path) + MANIFEST_SUFFIX
    if not os.path.exists(mpath):
        logger.info("no manifest next to %s; checking tokens only", anchors_path)
        return
    with open(mpath, encoding="utf-8") as f:
        recorded = json.load(f)["inputs"]
    for name, path in (("src_vec", src_vec), ("tgt_vec", tgt_vec)):
        if name in recorded and recorded[name]["sha256"] != sha256_file(path):
            raise CommandError(
                f"{path} differs from the {name} the anchors in {anchors_path} were built from"
            )


def load_anchors_for(args, src, tgt):
    check_anchor_manifest(args.anchors, args.src_vec, args.tgt_vec)
    anchors = read_anchor_tsv(args.anchors)
    try:
        anchors.validate(src, tgt)
    except ValueError as exc:
        raise CommandError(f"{args.anchors}: {exc}") from None
    return anchors


def cmd_anchors(args):
    src = load_vec_file(args.src_vec)
    tgt = load_vec_file(args.tgt_vec)
    entries = load_lexicon(args.lexicon, lowercase=args.lowercase)
    logger.info("lexicon: %d entries, %d malformed lines", len(entries), entries.skipped)
    if args.score_threshold is not None:
        entries = filter_by_score(entries, args.score_threshold)
    if args.stopwords:
        entries = remove_stopwords(entries, load_stopwords(args.stopwords), args.stopword_side)
    try:
        anchors = build_anchor_set(entries, src, tgt)
    except ValueError as exc:
        raise CommandError(str(exc)) from None
    if args.sample is not None:
        try:
            anchors = sample_anchors(anchors, args.sample, args.seed)
        except ValueError as exc:
            raise CommandError(str(exc)) from None
    logger.info("%d anchors", len(anchors))
    inputs = {"src_vec": args.src_vec, "tgt_vec": args.tgt_vec, "lexicon": args.lexicon}
    if args.stopwords:
        inputs["stopwords"] = args.stopwords
    with Outputs() as out:
        write_anchor_tsv(anchors, out.path(args.out))
        write_manifest(out, args.out, manifest(args, inputs, [args.out], anchors.checksum()))


def cmd_map(args):
    src = load_vec_file(args.src_vec)
    tgt = load_vec_file(args.tgt_vec)
    anchors = load_anchors_for(args, src, tgt)
    scheme = WeightingScheme(args.scheme, args.temperature, args.top_k, args.exclude_self)
    if scheme.k > len(anchors):
        raise CommandError(f"--top-k {scheme.k} exceeds the {len(anchors)} anchors")
    emb = anchor_embeddings(src, anchors)
    inputs = {"src_vec": args.src_vec, "tgt_vec": args.tgt_vec, "anchors": args.anchors}
    with Outputs() as out:
        for side, table, vec, path in (
            ("source", src, args.src_vec, args.out_src),
            ("target", tgt, args.tgt_vec, args.out_tgt),
        ):
            mapped = map_table(table, anchors, emb, scheme, side, args.threads)
            save_vec_file(mapped.table, out.path(path))
            meta = dict(mapped.provenance, input_sha256=sha256_file(vec))
            write_metadata(out.path(f"{path}.meta"), meta)
            if args.dump_topk:
                dump = f"{args.dump_topk}.{side}.tsv"
                rows = topk_rows(table, anchors.indices(side), scheme)
                write_topk_tsv(out.path(dump), table.tokens, rows)
        write_manifest(
            out, args.out_tgt,
            manifest(args, inputs, [args.out_src, args.out_tgt], anchors.checksum()),
        )


def cmd_ls(args):
    src = load_vec_file(args.src_vec)
    tgt = load_vec_file(args.tgt_vec)
    anchors = load_anchors_for(args, src, tgt)
    anchor_src = anchor_embeddings(src, anchors)
    transform = ls_fit(tgt.rows(anchors.tgt_indices), anchor_src, l2=args.l2)
    projected = ls_project(tgt, transform, anchors)
    report = {
        "residual": transform.residual,
        "relative_residual": transform.residual / float(np.linalg.norm(anchor_src)),
        "rank": transform.rank,
        "l2": transform.l2,
        "anchors": len(anchors),
        "source_dim": src.dim,
        "target_dim": tgt.dim,
        "zero_rows": projected.zero_rows,
        "anchor_checksum": anchors.checksum(),
    }
    inputs = {"src_vec": args.src_vec, "tgt_vec": args.tgt_vec, "anchors": args.anchors}
    report_path = args.report or f"{args.out}.residual.json"
    with Outputs() as out:
        save_vec_file(projected.table, out.path(args.out))
        write_metadata(out.path(f"{args.out}.meta"), projected.provenance)
        write_text(out.path(report_path), json.dumps(report, indent=1, sort_keys=True) + "\n")
        write_manifest(out, args.out, manifest(args, inputs, [args.out, report_path], anchors.checksum()))


def _dataset(args):
    label_map = read_label_map(args.label_map) if args.label_map else None
    return load_dataset(args.dataset, label_map=label_map, lowercase=args.lowercase, stars=args.stars)


def _table_checksum(path):
    meta_path = f"{path}.meta"
    if os.path.exists(meta_path):
        return read_metadata(meta_path).get("anchor_checksum")
    return None


def cmd_train(args):
    table = load_vec_file(args.table)
    data = _dataset(args)
    config = TrainConfig(args.lr, args.epochs, args.l2, args.batch_size, args.seed)
    clf = train(data, table, config)
    checksum = _table_checksum(args.table)
    report = evaluate_macro_f1(clf, data)
    inputs = {"table": args.table, "dataset": args.dataset}
    with Outputs() as out:
        save_model(clf, out.path(args.out), extra={"anchor_checksum": checksum, "table_sha256": sha256_file(args.table)})
        summary = {"final_loss": clf.final_loss, "train_macro_f1": report.macro_f1, "n": len(data)}
        write_text(out.path(f"{args.out}.train.json"), json.dumps(summary, indent=1, sort_keys=True) + "\n")
        write_manifest(out, args.out, manifest(args, inputs, [args.out], checksum))


def cmd_stitch_eval(args):
    clf, payload = load_model(args.model)
    table = load_vec_file(args.table)
    trained_on = payload.get("anchor_checksum")
    stitched_to = _table_checksum(args.table)
    if trained_on and stitched_to and trained_on != stitched_to:
        raise CommandError(
            f"{args.table} was mapped with anchors {stitched_to}, "
            f"but the model was trained on a table mapped with anchors {trained_on}"
        )
    try:
        clf = stitch(clf, table)
    except ValueError as exc:
        raise CommandError(str(exc)) from None
    data = _dataset(args)
    report = evaluate_macro_f1(clf, data)
    inputs = {"model": args.model, "table": args.table, "dataset": args.dataset}
    with Outputs() as out:
        write_text(out.path(f"{args.out}.tsv"), report.to_tsv())
        write_text(out.path(f"{args.out}.json"), json.dumps(report.to_json(), indent=1, sort_keys=True) + "\n")
        write_manifest(out, f"{args.out}.json", manifest(args, inputs, [f"{args.out}.tsv", f"{args.out}.json"], trained_on))


def cmd_synth(args):
    rows = []
    for run in range(args.runs):
        scenario = SynthScenario(
            args.vocab, args.dim, args.sigma, args.anchors, args.classes, args.examples, args.seed + run
        )
        rows.extend(run_end_to_end(scenario, args.methods, args.top_k, args.temperature, threads=args.threads))
    with Outputs() as out:
        write_text(out.path(f"{args.out}.tsv"), report_tsv(rows))
        write_text(out.path(f"{args.out}.json"), report_json(rows))
        write_manifest(out, f"{args.out}.json", manifest(args, {}, [f"{args.out}.tsv", f"{args.out}.json"]))


def build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
    shared.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: all cores); never changes results")
    shared.add_argument("--lowercase", action="store_true", help="fold tokens to lower case")
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="rrstitch",
        description="Stitch target-language static embeddings onto a source model's embedding space.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("anchors", parents=[shared], help="extract the parallel anchor set")
    p.add_argument("--src-vec", required=True)
    p.add_argument("--tgt-vec", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--score-threshold", type=float, default=None)
    p.add_argument("--stopwords", default=None, help="file of whitespace-separated stop words")
    p.add_argument("--stopword-side", choices=("source", "target", "both"), default="both")
    p.add_argument("--sample", type=int, default=None, help="keep a uniform random subset of this size")
    p.add_argument("--out", required=True, help="anchor TSV to write")
    p.set_defaults(func=cmd_anchors)

    p = sub.add_parser("map", parents=[shared], help="relative-representation mapping of both tables")
    p.add_argument("--src-vec", required=True)
    p.add_argument("--tgt-vec", required=True)
    p.add_argument("--anchors", required=True)
    p.add_argument("--scheme", choices=SCHEMES, default="standard")
    p.add_argument("--top-k", type=int, default=DEFAULT_K)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--exclude-self", action="store_true",
                   help="never let an anchor token select itself among its nearest anchors")
    p.add_argument("--dump-topk", default=None, help="prefix for top-k inspection TSVs")
    p.add_argument("--out-src", required=True)
    p.add_argument("--out-tgt", required=True)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("ls", parents=[shared], help="least-squares projection baseline")
    p.add_argument("--src-vec", required=True)
    p.add_argument("--tgt-vec", required=True)
    p.add_argument("--anchors", required=True)
    p.add_argument("--l2", type=float, default=0.0, help="optional ridge weight")
    p.add_argument("--report", default=None, help="residual report JSON (default: <out>.residual.json)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ls)

    for name, func, help_ in (
        ("train", cmd_train, "train a linear head on pooled embeddings"),
        ("stitch-eval", cmd_stitch_eval, "swap in a table and report macro-F1"),
    ):
        p = sub.add_parser(name, parents=[shared], help=help_)
        p.add_argument("--table", required=True)
        p.add_argument("--dataset", required=True, help="label<TAB>text TSV")
        p.add_argument("--label-map", default=None, help="name<TAB>id sidecar for string labels")
        p.add_argument("--stars", action="store_true", help="labels are 1-5 stars; fold to 3 classes")
        p.add_argument("--out", required=True)
        if name == "train":
            p.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
            p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
            p.add_argument("--l2", type=float, default=TrainConfig.l2)
            p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
        else:
            p.add_argument("--model", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("synth", parents=[shared], help="synthetic end-to-end stitching benchmark")
    p.add_argument("--vocab", type=int, default=500)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--sigma", type=float, default=0.3)
    p.add_argument("--anchors", type=int, default=250)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--examples", type=int, default=600)
    p.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS))
    p.add_argument("--top-k", type=int, default=DEFAULT_K)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--runs", type=int, default=1, help="scenarios with seeds seed, seed+1, ...")
    p.add_argument("--out", required=True, help="report prefix (.tsv and .json)")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.threads is None:
        args.threads = default_threads()
    try:
        args.func(args)
    except (CommandError, ValueError, OSError) as exc:
        print(f"rrstitch {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
