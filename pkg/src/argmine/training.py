"""Training loops and run bookkeeping.

Batches are packed greedily under a token budget rather than by a fixed
count. All losses use sum reduction so that stepping every N batches is
exactly equivalent to stepping once on their union. Reported numbers follow
one convention everywhere: per seed, average the metric over the last five
epochs; across seeds, report mean and sample standard deviation.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import torch
from torch import nn

from .backbone import ToyTransformerBackbone
from .checkpoint import save_checkpoint
from .corpus import SerializedThread
from .errors import BatchingError, ConfigError, MappingError
from .evaluation import exact_span_scores, mean_and_std, relation_scores
from .heads import (
    DEFAULT_MASK_COUNT,
    PromptInstance,
    RtpHead,
    TokenTagger,
    build_prompt,
    mean_pool_forward,
    prompt_forward,
)
from .labels import ComponentSpan, LabeledThread
from .markers import (
    POLICY_SELECTIVE,
    MarkerLexicon,
    MaskedBatch,
    build_masked_batch,
)
from .tokenizer import Vocab, WordTokenizer

DEFAULT_LAST_EPOCHS = 5


def derive_seed(*parts: object) -> int:
    """Stable 32-bit seed from a tuple of labels; independent streams per label."""
    digest = hashlib.sha256(repr(parts).encode("utf8")).digest()
    return int.from_bytes(digest[:4], "big")


@dataclass
class TrainConfig:
    token_budget: int
    accumulation_steps: int
    learning_rate: float
    epochs: int
    seed: int = 0
    mask_policy: str = POLICY_SELECTIVE
    holdout_fraction: float = 0.01
    default_checkpoint_epoch: int = 4
    freeze_backbone: bool = False

    def __post_init__(self) -> None:
        if self.token_budget < 1:
            raise ConfigError(f"token_budget must be positive, got {self.token_budget}")
        if self.accumulation_steps < 1:
            raise ConfigError(
                f"accumulation_steps must be positive, got {self.accumulation_steps}"
            )
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")

    @classmethod
    def smlm(cls, **overrides) -> "TrainConfig":
        base = cls(token_budget=8192, accumulation_steps=3, learning_rate=1e-6, epochs=10)
        return replace(base, **overrides)

    @classmethod
    def downstream(cls, comment_level: bool = False, **overrides) -> "TrainConfig":
        base = cls(
            token_budget=1024 if comment_level else 8192,
            accumulation_steps=4,
            learning_rate=2e-5,
            epochs=30,
        )
        return replace(base, **overrides)


def bucket_batches(
    lengths: Sequence[int],
    budget: int,
    seed: int = 0,
    ids: Sequence[str] | None = None,
) -> list[list[int]]:
    """Pack item indices into batches whose total length stays under budget.

    Items are packed longest-first; the resulting batch order is shuffled
    deterministically from ``seed``.
    """
    for k, n in enumerate(lengths):
        if n > budget:
            name = ids[k] if ids is not None else f"item {k}"
            raise BatchingError(f"{name} has {n} tokens, over the batch budget {budget}")
        if n < 1:
            name = ids[k] if ids is not None else f"item {k}"
            raise BatchingError(f"{name} is empty")
    order = sorted(range(len(lengths)), key=lambda k: (-lengths[k], k))
    batches: list[list[int]] = []
    current: list[int] = []
    used = 0
    for k in order:
        if current and used + lengths[k] > budget:
            batches.append(current)
            current, used = [], 0
        current.append(k)
        used += lengths[k]
    if current:
        batches.append(current)
    random.Random(seed).shuffle(batches)
    return batches


@dataclass
class EpochRecord:
    seed: int
    epoch: int
    metrics: dict[str, float]
    run: str = ""


@dataclass
class RunLedger:
    """Per-epoch metrics for a family of runs, one model per seed."""

    records: list[EpochRecord] = field(default_factory=list)

    def add(self, seed: int, epoch: int, run: str = "", **metrics: float) -> None:
        self.records.append(
            EpochRecord(seed=seed, epoch=epoch, metrics=dict(metrics), run=run)
        )

    def seeds(self) -> list[int]:
        return sorted({r.seed for r in self.records})

    def history(self, metric: str, seed: int) -> list[float]:
        rows = sorted(
            (r for r in self.records if r.seed == seed and metric in r.metrics),
            key=lambda r: r.epoch,
        )
        return [r.metrics[metric] for r in rows]

    def summary(
        self, metric: str, last_epochs: int = DEFAULT_LAST_EPOCHS
    ) -> tuple[float, float, dict[int, float]]:
        """Mean and sample std across seeds of each seed's last-epochs average."""
        per_seed: dict[int, float] = {}
        for seed in self.seeds():
            hist = self.history(metric, seed)
            if not hist:
                continue
            tail = hist[-last_epochs:]
            per_seed[seed] = sum(tail) / len(tail)
        if not per_seed:
            raise ConfigError(f"no records carry metric {metric!r}")
        mean, std = mean_and_std(list(per_seed.values()))
        return mean, std, per_seed

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf8") as fh:
            for r in self.records:
                fh.write(
                    json.dumps(
                        {
                            "seed": r.seed,
                            "epoch": r.epoch,
                            "run": r.run,
                            "metrics": r.metrics,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "RunLedger":
        ledger = cls()
        with open(path, encoding="utf8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                ledger.add(row["seed"], row["epoch"], row.get("run", ""), **row["metrics"])
        return ledger

    def render_table(self, metric: str, last_epochs: int = DEFAULT_LAST_EPOCHS) -> str:
        mean, std, per_seed = self.summary(metric, last_epochs)
        rows = [f"{metric} (mean of last {last_epochs} epochs per seed)"]
        for seed, value in sorted(per_seed.items()):
            rows.append(f"  seed {seed:<4} {value:.4f}")
        rows.append(f"  overall    {mean:.4f} +/- {std:.4f}")
        return "\n".join(rows)


def _accumulating_steps(
    optimizer: torch.optim.Optimizer, every: int
) -> Callable[..., None]:
    """Step the optimizer once per ``every`` accumulated batches."""
    pending = 0

    def step(force: bool = False) -> None:
        nonlocal pending
        if not force:
            pending += 1
        if pending and (force or pending == every):
            optimizer.step()
            optimizer.zero_grad()
            pending = 0

    return step


@dataclass
class SmlmResult:
    ledger: RunLedger
    holdout_ids: list[str]
    unmaskable_threads: int
    checkpoint_paths: dict[int, Path]
    default_checkpoint: Path | None


def masked_token_loss(
    backbone: ToyTransformerBackbone,
    vocab: Vocab,
    st: SerializedThread,
    batch: MaskedBatch,
) -> tuple[torch.Tensor, int]:
    """Sum cross-entropy at the masked positions; (loss, mask count)."""
    positions = sorted(batch.target_tokens)
    ids = torch.tensor(vocab.encode_all(batch.input_tokens), dtype=torch.long)
    flags = torch.tensor(st.global_attention, dtype=torch.bool)
    logits = backbone.mlm_logits(backbone.encode(ids, flags))
    pos = torch.tensor(positions, dtype=torch.long)
    targets = torch.tensor(
        [vocab.encode(batch.target_tokens[p]) for p in positions], dtype=torch.long
    )
    loss = nn.functional.cross_entropy(logits[pos], targets, reduction="sum")
    return loss, len(positions)


def masked_marker_accuracy(
    backbone: ToyTransformerBackbone,
    vocab: Vocab,
    threads: Sequence[SerializedThread],
    lexicon: MarkerLexicon | None = None,
    tokenizer: WordTokenizer | None = None,
) -> float:
    """Fraction of selectively masked marker tokens recovered by argmax."""
    correct = total = 0
    with torch.no_grad():
        for st in threads:
            batch = build_masked_batch(st, POLICY_SELECTIVE, lexicon=lexicon, tokenizer=tokenizer)
            if not batch.target_tokens:
                continue
            positions = sorted(batch.target_tokens)
            ids = torch.tensor(vocab.encode_all(batch.input_tokens), dtype=torch.long)
            flags = torch.tensor(st.global_attention, dtype=torch.bool)
            logits = backbone.mlm_logits(backbone.encode(ids, flags))
            preds = logits[torch.tensor(positions, dtype=torch.long)].argmax(dim=-1)
            for p, pred_id in zip(positions, preds.tolist()):
                total += 1
                correct += pred_id == vocab.encode(batch.target_tokens[p])
    return correct / total if total else 0.0


def train_smlm(
    backbone: ToyTransformerBackbone,
    vocab: Vocab,
    threads: Sequence[SerializedThread],
    config: TrainConfig,
    lexicon: MarkerLexicon | None = None,
    tokenizer: WordTokenizer | None = None,
    checkpoint_dir: str | Path | None = None,
    run_name: str = "smlm",
) -> SmlmResult:
    """Masked-token pretraining over serialized threads.

    Holds out ``config.holdout_fraction`` of the threads for the per-epoch
    masked-marker accuracy and never trains on them. Threads yielding no
    masked position under the policy are skipped and counted. A checkpoint is
    written per epoch when ``checkpoint_dir`` is set, with the configured
    default epoch copied to ``smlm-default.pt``.
    """
    if not threads:
        raise ConfigError("no threads to train on")
    if lexicon is None:
        lexicon = MarkerLexicon.default()
    if tokenizer is None:
        tokenizer = WordTokenizer()
    rng = random.Random(derive_seed(config.seed, "holdout"))
    n_hold = max(1, int(round(config.holdout_fraction * len(threads)))) if len(threads) > 1 else 0
    hold_idx = set(rng.sample(range(len(threads)), n_hold)) if n_hold else set()
    holdout = [threads[k] for k in sorted(hold_idx)]
    train = [threads[k] for k in range(len(threads)) if k not in hold_idx]
    if not train:
        raise ConfigError("holdout fraction leaves no training threads")

    optimizer = torch.optim.Adam(backbone.parameters(), lr=config.learning_rate)
    step = _accumulating_steps(optimizer, config.accumulation_steps)
    ledger = RunLedger()
    unmaskable = 0
    paths: dict[int, Path] = {}
    default_path: Path | None = None
    ckdir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckdir is not None:
        ckdir.mkdir(parents=True, exist_ok=True)

    for epoch in range(1, config.epochs + 1):
        batches = bucket_batches(
            [len(st) for st in train],
            config.token_budget,
            seed=derive_seed(config.seed, "batches", epoch),
            ids=[st.thread_id for st in train],
        )
        loss_sum = 0.0
        mask_total = 0
        for batch_ids in batches:
            loss = None
            for k in batch_ids:
                st = train[k]
                masked = build_masked_batch(
                    st,
                    config.mask_policy,
                    seed=derive_seed(config.seed, "mask", epoch, k),
                    lexicon=lexicon,
                    tokenizer=tokenizer,
                )
                if not masked.target_tokens:
                    unmaskable += 1
                    continue
                part, n = masked_token_loss(backbone, vocab, st, masked)
                loss = part if loss is None else loss + part
                mask_total += n
            if loss is None:
                continue
            loss.backward()
            loss_sum += float(loss.detach())
            step()
        step(force=True)
        metrics = {
            "train_loss": loss_sum / mask_total if mask_total else 0.0,
            "masked_positions": float(mask_total),
        }
        if holdout:
            metrics["holdout_marker_accuracy"] = masked_marker_accuracy(
                backbone, vocab, holdout, lexicon, tokenizer
            )
        ledger.add(config.seed, epoch, run=run_name, **metrics)
        if ckdir is not None:
            path = ckdir / f"smlm-epoch{epoch}.pt"
            meta = {
                "task": "smlm",
                "epoch": epoch,
                "seed": config.seed,
                "policy": config.mask_policy,
                "default": epoch == config.default_checkpoint_epoch,
            }
            save_checkpoint(
                path,
                backbone,
                vocab,
                tokenizer.fingerprint(),
                lexicon.fingerprint(),
                meta=meta,
            )
            paths[epoch] = path
            if epoch == config.default_checkpoint_epoch:
                default_path = ckdir / "smlm-default.pt"
                save_checkpoint(
                    default_path,
                    backbone,
                    vocab,
                    tokenizer.fingerprint(),
                    lexicon.fingerprint(),
                    meta=meta,
                )
    return SmlmResult(
        ledger=ledger,
        holdout_ids=[st.thread_id for st in holdout],
        unmaskable_threads=unmaskable,
        checkpoint_paths=paths,
        default_checkpoint=default_path,
    )


def _trainable_params(model: nn.Module, config: TrainConfig) -> Iterable[nn.Parameter]:
    if not config.freeze_backbone:
        return model.parameters()
    trainable = []
    for name, p in model.named_parameters():
        if name.startswith("backbone."):
            p.requires_grad_(False)
        else:
            trainable.append(p)
    return trainable


def predict_tags(tagger: TokenTagger, vocab: Vocab, sts: Sequence[SerializedThread]):
    preds = []
    with torch.no_grad():
        for st in sts:
            ids = torch.tensor(vocab.encode_all(st.tokens), dtype=torch.long)
            flags = torch.tensor(st.global_attention, dtype=torch.bool)
            preds.append(tagger.decode(ids, flags))
    return preds


def train_aci(
    tagger: TokenTagger,
    vocab: Vocab,
    train: Sequence[LabeledThread],
    test: Sequence[LabeledThread],
    config: TrainConfig,
    run_name: str = "aci",
) -> RunLedger:
    """Finetune the tagger with CRF negative log-likelihood.

    Evaluates exact-span micro F1 and token accuracy on ``test`` after every
    epoch.
    """
    if not train:
        raise ConfigError("no labelled threads to train on")
    optimizer = torch.optim.Adam(_trainable_params(tagger, config), lr=config.learning_rate)
    step = _accumulating_steps(optimizer, config.accumulation_steps)
    ledger = RunLedger()
    for epoch in range(1, config.epochs + 1):
        batches = bucket_batches(
            [len(lt.st) for lt in train],
            config.token_budget,
            seed=derive_seed(config.seed, "batches", epoch),
            ids=[lt.st.thread_id for lt in train],
        )
        loss_sum = 0.0
        token_total = 0
        for batch_ids in batches:
            loss = None
            for k in batch_ids:
                lt = train[k]
                ids = torch.tensor(vocab.encode_all(lt.st.tokens), dtype=torch.long)
                flags = torch.tensor(lt.st.global_attention, dtype=torch.bool)
                part = tagger.loss(ids, lt.bio, flags)
                loss = part if loss is None else loss + part
                token_total += len(lt.st)
            if loss is None:
                continue
            loss.backward()
            loss_sum += float(loss.detach())
            step()
        step(force=True)
        metrics = {"train_loss": loss_sum / token_total if token_total else 0.0}
        if test:
            preds = predict_tags(tagger, vocab, [lt.st for lt in test])
            report = exact_span_scores(preds, [lt.bio for lt in test], tagger.schema)
            metrics["test_micro_f1"] = report.micro.f1
            metrics["test_token_accuracy"] = report.token_accuracy
        ledger.add(config.seed, epoch, run=run_name, **metrics)
    return ledger


@dataclass
class PooledExample:
    """A relation instance for the mean-pooling head."""

    st: SerializedThread
    source: ComponentSpan
    target: ComponentSpan
    label: str


def rtp_examples(
    threads: Sequence[LabeledThread],
    mode: str,
    mask_count: int = DEFAULT_MASK_COUNT,
    max_positions: int | None = None,
) -> list[PromptInstance] | list[PooledExample]:
    """Expand labelled threads into one relation instance per edge."""
    out: list = []
    for lt in threads:
        spans = {c.component_id: c for c in lt.components}
        for edge in lt.edges:
            try:
                src = spans[edge.source_component_id]
                tgt = spans[edge.target_component_id]
            except KeyError as exc:
                raise MappingError(
                    f"edge endpoint {exc.args[0]!r} missing from thread {lt.st.thread_id}"
                ) from None
            if mode == "prompt":
                out.append(
                    build_prompt(
                        lt.st,
                        src,
                        tgt,
                        mask_count=mask_count,
                        max_positions=max_positions,
                        label=edge.coarse_class,
                    )
                )
            else:
                out.append(
                    PooledExample(st=lt.st, source=src, target=tgt, label=edge.coarse_class)
                )
    return out


def _rtp_scores(
    backbone: ToyTransformerBackbone,
    head: RtpHead,
    vocab: Vocab,
    example: PromptInstance | PooledExample,
) -> torch.Tensor:
    if isinstance(example, PromptInstance):
        return prompt_forward(backbone, vocab, head, example)
    return mean_pool_forward(backbone, vocab, head, example.st, example.source, example.target)


def _example_length(example: PromptInstance | PooledExample) -> int:
    return len(example.tokens) if isinstance(example, PromptInstance) else len(example.st)


def predict_relations(
    backbone: ToyTransformerBackbone,
    head: RtpHead,
    vocab: Vocab,
    examples: Sequence[PromptInstance | PooledExample],
) -> list[str]:
    preds = []
    with torch.no_grad():
        for ex in examples:
            scores = _rtp_scores(backbone, head, vocab, ex)
            preds.append(head.classes[int(scores.argmax())])
    return preds


def train_rtp(
    backbone: ToyTransformerBackbone,
    head: RtpHead,
    vocab: Vocab,
    train: Sequence[PromptInstance | PooledExample],
    test: Sequence[PromptInstance | PooledExample],
    config: TrainConfig,
    run_name: str = "rtp",
) -> RunLedger:
    """Finetune backbone plus relation head with cross-entropy."""
    if not train:
        raise ConfigError("no relation instances to train on")
    for ex in train:
        if ex.label is None:
            raise ConfigError("an unlabelled instance cannot be trained on")
    model = nn.ModuleDict({"backbone": backbone, "head": head})
    optimizer = torch.optim.Adam(_trainable_params(model, config), lr=config.learning_rate)
    step = _accumulating_steps(optimizer, config.accumulation_steps)
    ledger = RunLedger()
    for epoch in range(1, config.epochs + 1):
        batches = bucket_batches(
            [_example_length(ex) for ex in train],
            config.token_budget,
            seed=derive_seed(config.seed, "batches", epoch),
        )
        loss_sum = 0.0
        seen = 0
        for batch_ids in batches:
            loss = None
            for k in batch_ids:
                ex = train[k]
                scores = _rtp_scores(backbone, head, vocab, ex)
                target = torch.tensor(head.class_index(ex.label))
                part = nn.functional.cross_entropy(
                    scores.unsqueeze(0), target.unsqueeze(0), reduction="sum"
                )
                loss = part if loss is None else loss + part
                seen += 1
            if loss is None:
                continue
            loss.backward()
            loss_sum += float(loss.detach())
            step()
        step(force=True)
        metrics = {"train_loss": loss_sum / seen if seen else 0.0}
        if test:
            preds = predict_relations(backbone, head, vocab, test)
            report = relation_scores(preds, [ex.label for ex in test], head.classes)
            metrics["test_accuracy"] = report.accuracy
            metrics["test_macro_f1"] = report.macro_f1
        ledger.add(config.seed, epoch, run=run_name, **metrics)
    return ledger
