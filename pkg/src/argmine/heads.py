"""Task heads on top of a backbone.

``TokenTagger`` projects encoder vectors to BIO emissions and decodes with a
constrained linear-chain CRF. Relation typing runs either through a cloze
prompt appended to the thread (the default) or through mean-pooled component
vectors; both feed a single linear layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .backbone import Backbone
from .corpus import SerializedThread
from .crf import LinearChainCrf
from .errors import ConfigError, PromptError
from .labels import BioSequence, ComponentSpan, LabelSchema
from .tokenizer import MASK_TOKEN, Vocab, user_token

PROMPT_SAID = "said"
DEFAULT_MASK_COUNT = 3

RTP_PROMPT = "prompt"
RTP_MEAN_POOL = "mean_pool"


class TokenTagger(nn.Module):
    """Backbone + linear projection + constrained CRF over a tag schema."""

    def __init__(self, backbone: Backbone, schema: LabelSchema) -> None:
        super().__init__()
        self.backbone = backbone
        self.schema = schema
        self.proj = nn.Linear(backbone.hidden_size, schema.num_tags)
        self.crf = LinearChainCrf(schema.tags)

    def emissions(
        self, token_ids: torch.Tensor, global_attention: torch.Tensor | None = None
    ) -> torch.Tensor:
        vectors = self.backbone.encode(token_ids, global_attention)
        return self.proj(vectors)

    def loss(
        self,
        token_ids: torch.Tensor,
        gold: BioSequence,
        global_attention: torch.Tensor | None = None,
    ) -> torch.Tensor:
        if len(gold) != len(token_ids):
            raise ConfigError(
                f"gold sequence has {len(gold)} labels for {len(token_ids)} tokens"
            )
        return self.crf.nll(self.emissions(token_ids, global_attention), gold)

    def decode(
        self, token_ids: torch.Tensor, global_attention: torch.Tensor | None = None
    ) -> BioSequence:
        return self.crf.decode(self.emissions(token_ids, global_attention))


@dataclass
class PromptInstance:
    """A thread with a relation-typing cloze appended.

    ``mask_positions`` are absolute indices into ``tokens`` (context followed
    by the prompt). The referred-to component is presented first, the
    referring one second, each prefixed with its author token and "said".
    """

    thread_id: str
    source_component_id: str
    target_component_id: str
    tokens: list[str] = field(repr=False)
    mask_positions: list[int]
    context_length: int
    label: str | None = None


def build_prompt(
    st: SerializedThread,
    source: ComponentSpan,
    target: ComponentSpan,
    mask_count: int = DEFAULT_MASK_COUNT,
    max_positions: int | None = None,
    label: str | None = None,
) -> PromptInstance:
    """Append "[USER-i] said <target> [MASK]*k [USER-j] said <source>" to the thread.

    When the combined sequence would exceed ``max_positions`` the context is
    truncated from the front; the prompt itself is never cut.
    """
    if mask_count < 1:
        raise PromptError("mask_count must be at least 1")
    if source.component_id == target.component_id:
        raise PromptError(f"relation endpoints are the same component {source.component_id!r}")
    parts: list[str] = []
    for span in (target, source):
        comp = st.tokens[span.token_start : span.token_end]
        if not comp:
            raise PromptError(f"component {span.component_id} has no surviving tokens")
        author = st.post_user[st.post_index_of[span.token_start]]
        parts.append(user_token(author))
        parts.append(PROMPT_SAID)
        parts.extend(comp)
        if span is target:
            mask_offset = len(parts)
            parts.extend([MASK_TOKEN] * mask_count)
    context = list(st.tokens)
    if max_positions is not None:
        if len(parts) > max_positions:
            raise PromptError(
                f"prompt alone has {len(parts)} tokens, over the {max_positions} limit"
            )
        room = max_positions - len(parts)
        if len(context) > room:
            context = context[len(context) - room :]
    base = len(context)
    return PromptInstance(
        thread_id=st.thread_id,
        source_component_id=source.component_id,
        target_component_id=target.component_id,
        tokens=context + parts,
        mask_positions=[base + mask_offset + m for m in range(mask_count)],
        context_length=base,
        label=label,
    )


class RtpHead(nn.Module):
    """Linear relation classifier over mask vectors or mean-pooled spans."""

    def __init__(
        self,
        mode: str,
        hidden_size: int,
        classes: list[str],
        mask_count: int = DEFAULT_MASK_COUNT,
    ) -> None:
        super().__init__()
        if mode not in (RTP_PROMPT, RTP_MEAN_POOL):
            raise ConfigError(f"unknown relation head mode {mode!r}")
        if not classes:
            raise ConfigError("relation head needs at least one class")
        self.mode = mode
        self.classes = list(classes)
        self.mask_count = mask_count
        width = mask_count * hidden_size if mode == RTP_PROMPT else 2 * hidden_size
        self.out = nn.Linear(width, len(classes))

    def class_index(self, name: str) -> int:
        try:
            return self.classes.index(name)
        except ValueError:
            raise ConfigError(f"unknown relation class {name!r}; have {self.classes}") from None


def prompt_forward(
    backbone: Backbone,
    vocab: Vocab,
    head: RtpHead,
    instance: PromptInstance,
    global_attention: torch.Tensor | None = None,
) -> torch.Tensor:
    """Encode the prompted thread and classify from the mask-position vectors."""
    if head.mode != RTP_PROMPT:
        raise ConfigError("prompt_forward needs a head in prompt mode")
    if len(instance.mask_positions) != head.mask_count:
        raise ConfigError(
            f"instance has {len(instance.mask_positions)} masks, head expects {head.mask_count}"
        )
    ids = torch.tensor(vocab.encode_all(instance.tokens), dtype=torch.long)
    for pos in instance.mask_positions:
        if not 0 <= pos < ids.size(0):
            raise PromptError(f"mask position {pos} outside sequence of {ids.size(0)}")
    vectors = backbone.encode(ids, global_attention)
    picked = vectors[torch.tensor(instance.mask_positions, dtype=torch.long)]
    return head.out(picked.reshape(-1))


def mean_pool_forward(
    backbone: Backbone,
    vocab: Vocab,
    head: RtpHead,
    st: SerializedThread,
    source: ComponentSpan,
    target: ComponentSpan,
    global_attention: torch.Tensor | None = None,
) -> torch.Tensor:
    """Classify from mean-pooled vectors of the two component spans."""
    if head.mode != RTP_MEAN_POOL:
        raise ConfigError("mean_pool_forward needs a head in mean_pool mode")
    ids = torch.tensor(vocab.encode_all(st.tokens), dtype=torch.long)
    vectors = backbone.encode(ids, global_attention)
    pooled = []
    for span in (target, source):
        if span.token_end > ids.size(0):
            raise PromptError(
                f"component {span.component_id} extends past the serialized thread"
            )
        pooled.append(vectors[span.token_start : span.token_end].mean(dim=0))
    return head.out(torch.cat(pooled))
