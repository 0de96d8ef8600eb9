"""Command-line entry point.

Subcommands cover the full pipeline: corpus preparation, masked-marker
pretraining, component and relation finetuning, evaluation, error analysis,
corpus statistics, and a seeded synthetic corpus for end-to-end runs.
Training commands are driven by a JSON manifest; every artifact they write
embeds the manifest hash, the seed, and the package version. Exit codes:
0 on success, 1 on a domain or I/O failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import torch

from . import __version__
from .backbone import BackboneConfig, ToyTransformerBackbone
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import (
    SplitPlan,
    Thread,
    extract_threads,
    make_splits,
    serialize_comments,
    serialize_thread,
)
from .corpus_io import (
    read_posts_jsonl,
    write_serialized_threads,
    write_split_plans,
)
from .errors import ArgmineError, ConfigError, InputError
from .evaluation import (
    component_token_gap,
    distance_error_profile,
    exact_span_scores,
    marker_vicinity_split,
    plot_metric_curves,
    relation_scores,
    render_distance_profile,
    render_relation_report,
    render_span_report,
    render_vicinity_report,
)
from .heads import RtpHead, TokenTagger
from .label_readers import (
    label_thread,
    read_standoff_jsonl,
    write_labeled_threads,
    read_labeled_threads,
)
from .labels import LabeledThread, dataset_stats, get_schema
from .manifest import ExperimentManifest
from .markers import MarkerLexicon
from .synth import SynthConfig, write_corpus
from .tokenizer import Vocab, WordTokenizer
from .training import (
    RunLedger,
    derive_seed,
    predict_relations,
    predict_tags,
    rtp_examples,
    train_aci,
    train_rtp,
    train_smlm,
)


def _parse_split_spec(text: str) -> list[tuple[float, float]]:
    """"80:20,50:50" -> [(0.8, 0.2), (0.5, 0.5)]."""
    specs = []
    for part in text.split(","):
        pieces = part.split(":")
        if len(pieces) != 2:
            raise InputError(f"split spec {part!r} is not TRAIN:TEST")
        try:
            a, b = (float(p) for p in pieces)
        except ValueError:
            raise InputError(f"split spec {part!r} is not numeric") from None
        if a <= 0 or b <= 0:
            raise InputError(f"split spec {part!r} needs positive shares")
        specs.append((a / (a + b), b / (a + b)))
    return specs


def _stamp(extra: dict | None = None, **fields) -> dict:
    out = {"version": __version__}
    out.update(fields)
    if extra:
        out.update(extra)
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf8")


def _prepared_threads(
    posts_path: str,
    max_len: int,
    comment_level: bool,
    global_policy: str,
    user_limit: int,
    detect_quotes: bool = False,
):
    tokenizer = WordTokenizer()
    posts = read_posts_jsonl(posts_path, detect_quote_ranges=detect_quotes)
    threads = extract_threads(posts)
    if comment_level:
        sts = [
            s
            for t in threads
            for s in serialize_comments(t, tokenizer, max_len, user_limit)
        ]
    else:
        sts = [
            serialize_thread(t, tokenizer, max_len, user_limit, global_policy)
            for t in threads
        ]
    return tokenizer, threads, sts


def cmd_prepare_data(args: argparse.Namespace) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    tokenizer, threads, sts = _prepared_threads(
        args.input,
        args.max_len,
        args.comment_level,
        args.global_policy,
        args.user_limit,
        detect_quotes=args.detect_quotes,
    )
    meta = _stamp(
        tokenizer_fingerprint=tokenizer.fingerprint(),
        max_len=args.max_len,
        comment_level=args.comment_level,
        global_policy=args.global_policy,
    )
    write_serialized_threads(sts, out / "threads.jsonl", meta=meta)
    vocab = Vocab.build([st.tokens for st in sts], tokenizer, user_token_limit=args.user_limit)
    _write_json(out / "vocab.json", vocab.to_json())

    plans: list[SplitPlan] = []
    for ratios in _parse_split_spec(args.splits):
        plans.extend(make_splits(threads, ratios, args.seeds, args.base_seed))
    write_split_plans(plans, out / "splits.json", meta=meta)

    labeled_count = 0
    if args.annotations:
        schema = get_schema(args.schema)
        comps, rels = read_standoff_jsonl(args.annotations)
        if args.comment_level:
            raise ConfigError("annotations are aligned at thread level; drop --comment-level")
        labeled = [
            label_thread(t, st, comps, rels, schema)
            for t, st in zip(threads, sts)
        ]
        write_labeled_threads(labeled, out / "labeled.jsonl", meta=meta)
        labeled_count = len(labeled)

    summary = _stamp(
        posts=len(read_posts_jsonl(args.input)),
        threads=len(threads),
        serialized=len(sts),
        split_plans=len(plans),
        labeled_threads=labeled_count,
        tokenizer_fingerprint=tokenizer.fingerprint(),
        vocab_size=len(vocab.tokens),
    )
    _write_json(out / "prepare.json", summary)
    print(
        f"prepared {len(threads)} threads ({len(sts)} sequences), "
        f"{len(plans)} split plans -> {out}"
    )
    return 0


def cmd_make_synthetic(args: argparse.Namespace) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    cfg = SynthConfig(
        n_submissions=args.submissions,
        branches=args.branches,
        depth=args.depth,
        seed=args.seed,
        url_rate=args.url_rate,
        discontiguous_rate=args.discontiguous_rate,
    )
    n_posts, n_comps, n_rels = write_corpus(
        cfg, out / "posts.jsonl", out / "annotations.jsonl"
    )
    print(f"wrote {n_posts} posts, {n_comps} component records, {n_rels} relations -> {out}")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    schema = get_schema(args.schema)
    _, threads, sts = _prepared_threads(
        args.posts, args.max_len, False, "user_tokens", args.user_limit
    )
    comps, rels = read_standoff_jsonl(args.annotations)
    labeled = [label_thread(t, st, comps, rels, schema) for t, st in zip(threads, sts)]
    stats = dataset_stats(labeled, schema)
    lines = [f"corpus statistics ({schema.name}, {len(labeled)} threads)", "tag counts:"]
    for tag, n in stats["tags"].items():
        lines.append(f"  {tag:<8}{n:>10}")
    lines.append("relation counts:")
    for cls, n in stats["relations"].items():
        lines.append(f"  {cls:<20}{n:>8}")
    dropped = sum(lt.dropped_components for lt in labeled)
    dropped_edges = sum(lt.dropped_edges for lt in labeled)
    if dropped or dropped_edges:
        lines.append(f"dropped by truncation: {dropped} components, {dropped_edges} relations")
    text = "\n".join(lines)
    print(text)
    if args.output:
        payload = _stamp(extra=stats, schema=schema.name, threads=len(labeled))
        _write_json(Path(args.output), payload)
    return 0


def _build_backbone(
    mani: ExperimentManifest, vocab: Vocab, seed: int
) -> ToyTransformerBackbone:
    overrides = dict(mani.backbone)
    overrides.setdefault("max_positions", max(mani.max_len, 128))
    try:
        cfg = BackboneConfig(vocab_size=len(vocab.tokens), **overrides)
    except TypeError as exc:
        raise ConfigError(f"bad backbone override: {exc}") from exc
    return ToyTransformerBackbone(cfg, seed=derive_seed("backbone", seed))


def _manifest_for(args: argparse.Namespace, task: str) -> ExperimentManifest:
    mani = ExperimentManifest.from_json_file(args.manifest).resolved()
    if mani.task != task:
        raise ConfigError(f"manifest task is {mani.task!r}, this command runs {task!r}")
    return mani


def _labeled_corpus(mani: ExperimentManifest):
    if not mani.annotations:
        raise ConfigError("manifest needs an annotations path for this task")
    schema = get_schema(mani.schema)
    tokenizer = WordTokenizer()
    posts = read_posts_jsonl(mani.posts)
    threads = extract_threads(posts)
    comps, rels = read_standoff_jsonl(mani.annotations)
    labeled: dict[str, LabeledThread] = {}
    for t in threads:
        st = serialize_thread(t, tokenizer, mani.max_len, global_policy=mani.global_policy)
        labeled[t.thread_id] = label_thread(t, st, comps, rels, schema)
    vocab = Vocab.build([lt.st.tokens for lt in labeled.values()], tokenizer)
    return schema, tokenizer, threads, labeled, vocab


def _fresh_model(mani: ExperimentManifest, vocab: Vocab, plan_seed: int):
    """Backbone per run: from the pretraining checkpoint when given."""
    if mani.checkpoint:
        ck = load_checkpoint(mani.checkpoint)
        return ck.backbone, ck.vocab
    return _build_backbone(mani, vocab, plan_seed), vocab


def cmd_pretrain_smlm(args: argparse.Namespace) -> int:
    mani = _manifest_for(args, "smlm")
    out = Path(mani.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tokenizer, _, sts = _prepared_threads(
        mani.posts, mani.max_len, mani.comment_level, mani.global_policy, 12
    )
    lexicon = MarkerLexicon.load(mani.lexicon) if mani.lexicon else MarkerLexicon.default()
    vocab = Vocab.build([st.tokens for st in sts], tokenizer)
    backbone = _build_backbone(mani, vocab, mani.base_seed)
    config = mani.train_config(mani.base_seed)
    result = train_smlm(
        backbone,
        vocab,
        sts,
        config,
        lexicon,
        tokenizer,
        checkpoint_dir=out / "checkpoints",
    )
    result.ledger.to_jsonl(out / "smlm-metrics.jsonl")
    payload = _stamp(
        manifest_hash=mani.manifest_hash(),
        seed=mani.base_seed,
        policy=config.mask_policy,
        holdout_ids=result.holdout_ids,
        unmaskable_threads=result.unmaskable_threads,
        checkpoints={str(e): str(p) for e, p in result.checkpoint_paths.items()},
        default_checkpoint=(
            str(result.default_checkpoint) if result.default_checkpoint else None
        ),
    )
    _write_json(out / "smlm-run.json", payload)
    lines = [f"pretraining done ({config.mask_policy}, seed {mani.base_seed})"]
    if result.ledger.records and "holdout_marker_accuracy" in result.ledger.records[-1].metrics:
        lines.append(result.ledger.render_table("holdout_marker_accuracy", last_epochs=1))
    text = "\n".join(lines)
    (out / "smlm-summary.txt").write_text(text + "\n", encoding="utf8")
    print(text)
    return 0


def _downstream_plans(mani: ExperimentManifest, threads: list[Thread]) -> list[SplitPlan]:
    return make_splits(threads, mani.split_ratios, mani.n_seeds, mani.base_seed)


def cmd_train_aci(args: argparse.Namespace) -> int:
    mani = _manifest_for(args, "aci")
    out = Path(mani.output_dir)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    schema, tokenizer, threads, labeled, corpus_vocab = _labeled_corpus(mani)
    plans = _downstream_plans(mani, threads)
    ledger = RunLedger()
    for plan in plans:
        backbone, vocab = _fresh_model(mani, corpus_vocab, plan.seed)
        with torch.random.fork_rng():
            torch.manual_seed(derive_seed("tagger", plan.seed))
            tagger = TokenTagger(backbone, schema)
        config = mani.train_config(plan.seed)
        train = [labeled[tid] for tid in sorted(plan.members("train"))]
        test = [labeled[tid] for tid in sorted(plan.members("test"))]
        run = train_aci(tagger, vocab, train, test, config, run_name=plan.split_name)
        ledger.records.extend(run.records)
        save_checkpoint(
            out / "checkpoints" / f"aci-{plan.split_name}.pt",
            backbone,
            vocab,
            tokenizer.fingerprint(),
            tagger=tagger,
            meta=_stamp(
                manifest_hash=mani.manifest_hash(),
                seed=plan.seed,
                split=plan.split_name,
                task="aci",
            ),
        )
    ledger.to_jsonl(out / "aci-metrics.jsonl")
    header = f"manifest {mani.manifest_hash()[:12]}  version {__version__}"
    table = ledger.render_table("test_micro_f1")
    (out / "aci-summary.txt").write_text(f"{header}\n{table}\n", encoding="utf8")
    histories = [ledger.history("test_micro_f1", s) for s in ledger.seeds()]
    plot_metric_curves(histories, str(out / "aci-f1.png"), metric_name="span micro F1")
    print(table)
    return 0


def cmd_train_rtp(args: argparse.Namespace) -> int:
    mani = _manifest_for(args, "rtp")
    out = Path(mani.output_dir)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    schema, tokenizer, threads, labeled, corpus_vocab = _labeled_corpus(mani)
    plans = _downstream_plans(mani, threads)
    ledger = RunLedger()
    for plan in plans:
        backbone, vocab = _fresh_model(mani, corpus_vocab, plan.seed)
        with torch.random.fork_rng():
            torch.manual_seed(derive_seed("rtp-head", plan.seed))
            head = RtpHead(
                mani.rtp_mode,
                backbone.hidden_size,
                list(schema.relation_classes),
                mask_count=mani.mask_count,
            )
        config = mani.train_config(plan.seed)
        max_pos = backbone.config.max_positions
        train_ex = rtp_examples(
            [labeled[tid] for tid in sorted(plan.members("train"))],
            mani.rtp_mode,
            mani.mask_count,
            max_pos,
        )
        test_ex = rtp_examples(
            [labeled[tid] for tid in sorted(plan.members("test"))],
            mani.rtp_mode,
            mani.mask_count,
            max_pos,
        )
        if not train_ex:
            raise ConfigError(f"split {plan.split_name} has no training relations")
        run = train_rtp(backbone, head, vocab, train_ex, test_ex, config, run_name=plan.split_name)
        ledger.records.extend(run.records)
        save_checkpoint(
            out / "checkpoints" / f"rtp-{plan.split_name}.pt",
            backbone,
            vocab,
            tokenizer.fingerprint(),
            rtp_head=head,
            meta=_stamp(
                manifest_hash=mani.manifest_hash(),
                seed=plan.seed,
                split=plan.split_name,
                task="rtp",
                schema=schema.name,
            ),
        )
    ledger.to_jsonl(out / "rtp-metrics.jsonl")
    header = f"manifest {mani.manifest_hash()[:12]}  version {__version__}"
    table = ledger.render_table("test_macro_f1")
    (out / "rtp-summary.txt").write_text(f"{header}\n{table}\n", encoding="utf8")
    print(table)
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    ck = load_checkpoint(args.checkpoint)
    labeled, _ = read_labeled_threads(args.data)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    wrote = False
    if ck.tagger is not None:
        preds = predict_tags(ck.tagger, ck.vocab, [lt.st for lt in labeled])
        report = exact_span_scores(preds, [lt.bio for lt in labeled], ck.tagger.schema)
        text = render_span_report(report)
        (out / "evaluate-aci.txt").write_text(text + "\n", encoding="utf8")
        payload = _stamp(
            extra={k: v for k, v in ck.meta.items() if k in ("manifest_hash", "seed")},
            micro_f1=report.micro.f1,
            token_accuracy=report.token_accuracy,
            per_class={c: s.f1 for c, s in report.per_class.items()},
        )
        _write_json(out / "evaluate-aci.json", payload)
        print(text)
        wrote = True
    if ck.rtp_head is not None:
        mode = ck.rtp_head.mode
        examples = rtp_examples(
            labeled, mode, ck.rtp_head.mask_count, ck.backbone.config.max_positions
        )
        if not examples:
            raise InputError("no relation instances in the evaluation data")
        preds = predict_relations(ck.backbone, ck.rtp_head, ck.vocab, examples)
        report = relation_scores(preds, [ex.label for ex in examples], ck.rtp_head.classes)
        text = render_relation_report(report)
        (out / "evaluate-rtp.txt").write_text(text + "\n", encoding="utf8")
        payload = _stamp(
            extra={k: v for k, v in ck.meta.items() if k in ("manifest_hash", "seed")},
            accuracy=report.accuracy,
            macro_f1=report.macro_f1,
        )
        _write_json(out / "evaluate-rtp.json", payload)
        print(text)
        wrote = True
    if not wrote:
        raise ConfigError("checkpoint carries no task head to evaluate")
    return 0


def _rtp_distance_analysis(ck, labeled) -> str:
    examples = rtp_examples(
        labeled, ck.rtp_head.mode, ck.rtp_head.mask_count, ck.backbone.config.max_positions
    )
    if not examples:
        raise InputError("no relation instances to analyze")
    preds = predict_relations(ck.backbone, ck.rtp_head, ck.vocab, examples)
    spans_by_thread = {
        lt.st.thread_id: {c.component_id: c for c in lt.components} for lt in labeled
    }
    pairs = []
    k = 0
    for lt in labeled:
        for edge in lt.edges:
            ex = examples[k]
            spans = spans_by_thread[lt.st.thread_id]
            src = spans.get(edge.source_component_id)
            tgt = spans.get(edge.target_component_id)
            gap = component_token_gap(src, tgt) if src and tgt else None
            pairs.append((gap, preds[k] == ex.label))
            k += 1
    profile = distance_error_profile(pairs)
    return render_distance_profile(profile)


def cmd_analyze(args: argparse.Namespace) -> int:
    if args.metrics:
        if not args.metric:
            raise ConfigError("--metrics needs --metric")
        ledger = RunLedger.from_jsonl(args.metrics)
        table = ledger.render_table(args.metric)
        print(table)
        if args.plot:
            histories = [ledger.history(args.metric, s) for s in ledger.seeds()]
            plot_metric_curves(histories, args.plot, metric_name=args.metric)
            print(f"plot -> {args.plot}")
        return 0
    if not (args.checkpoint and args.data):
        raise ConfigError("analyze needs either --metrics or --checkpoint with --data")
    ck = load_checkpoint(args.checkpoint)
    labeled, _ = read_labeled_threads(args.data)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    wrote = False
    if ck.tagger is not None:
        preds = predict_tags(ck.tagger, ck.vocab, [lt.st for lt in labeled])
        report = marker_vicinity_split(
            preds,
            [lt.bio for lt in labeled],
            [lt.st.tokens for lt in labeled],
            MarkerLexicon.default(),
        )
        text = render_vicinity_report(report)
        (out / "analyze-markers.txt").write_text(text + "\n", encoding="utf8")
        print(text)
        wrote = True
    if ck.rtp_head is not None:
        text = _rtp_distance_analysis(ck, labeled)
        (out / "analyze-distance.txt").write_text(text + "\n", encoding="utf8")
        print(text)
        wrote = True
    if not wrote:
        raise ConfigError("checkpoint carries no task head to analyze")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="argmine",
        description="Argument mining over threaded discussions.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-data", help="serialize threads, build splits and labels")
    p.add_argument("--input", required=True, help="posts JSONL")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--max-len", type=int, default=4096)
    p.add_argument("--splits", default="80:20", help="comma-separated TRAIN:TEST specs")
    p.add_argument("--seeds", type=int, default=5, help="split plans per spec")
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--annotations", help="standoff annotations JSONL")
    p.add_argument("--schema", default="cmv")
    p.add_argument("--comment-level", action="store_true")
    p.add_argument("--global-policy", default="user_tokens", choices=["user_tokens", "none"])
    p.add_argument("--user-limit", type=int, default=12)
    p.add_argument("--detect-quotes", action="store_true")
    p.set_defaults(func=cmd_prepare_data)

    p = sub.add_parser("make-synthetic", help="write a seeded synthetic corpus")
    p.add_argument("--output", required=True)
    p.add_argument("--submissions", type=int, default=6)
    p.add_argument("--branches", type=int, default=2)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--url-rate", type=float, default=0.0)
    p.add_argument("--discontiguous-rate", type=float, default=0.0)
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("stats", help="tag and relation counts for a corpus")
    p.add_argument("--posts", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--schema", default="cmv")
    p.add_argument("--max-len", type=int, default=4096)
    p.add_argument("--user-limit", type=int, default=12)
    p.add_argument("--output", help="also write counts as JSON")
    p.set_defaults(func=cmd_stats)

    for name, fn in (
        ("pretrain-smlm", cmd_pretrain_smlm),
        ("train-aci", cmd_train_aci),
        ("train-rtp", cmd_train_rtp),
    ):
        p = sub.add_parser(name, help=f"run {name.replace('-', ' ')} from a manifest")
        p.add_argument("--manifest", required=True)
        p.set_defaults(func=fn)

    p = sub.add_parser("evaluate", help="score a checkpoint on labelled threads")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="labelled threads JSONL")
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", help="error analyses and metric curves")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--output-dir", default=".")
    p.add_argument("--metrics", help="run-metrics JSONL")
    p.add_argument("--metric", help="metric name for --metrics")
    p.add_argument("--plot", help="write a metric curve PNG")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ArgmineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
