"""Argument mining over threaded discussions.

Pipeline pieces: thread serialization with author and quote markup,
discourse-marker masking for pretraining, a CRF token tagger for argument
components, prompt-based relation typing, exact-span evaluation, and the
accompanying error analyses.
"""

__version__ = "0.1.0"

from .backbone import (
    BackboneConfig,
    Backbone,
    ToyTransformerBackbone,
    set_global_attention,
)
from .corpus import (
    Post,
    SerializedThread,
    SplitPlan,
    Thread,
    extract_threads,
    make_splits,
    reconstruct_post_body,
    serialize_comments,
    serialize_thread,
    strip_special_tokens,
)
from .crf import LinearChainCrf, bio_transition_masks
from .errors import ArgmineError
from .evaluation import (
    exact_span_scores,
    marker_vicinity_split,
    distance_error_profile,
    relation_scores,
)
from .heads import PromptInstance, RtpHead, TokenTagger, build_prompt
from .labels import (
    BioSequence,
    ComponentSpan,
    LabeledThread,
    RelationEdge,
    bio_to_spans,
    build_labeled_thread,
    dataset_stats,
    get_schema,
    spans_to_bio,
)
from .markers import MarkerLexicon, build_masked_batch, find_markers
from .manifest import ExperimentManifest
from .tokenizer import Vocab, WordTokenizer
from .training import RunLedger, TrainConfig, train_aci, train_rtp, train_smlm

__all__ = [
    "ArgmineError",
    "Backbone",
    "BackboneConfig",
    "BioSequence",
    "ComponentSpan",
    "ExperimentManifest",
    "LabeledThread",
    "LinearChainCrf",
    "MarkerLexicon",
    "Post",
    "PromptInstance",
    "RelationEdge",
    "RtpHead",
    "RunLedger",
    "SerializedThread",
    "SplitPlan",
    "Thread",
    "TokenTagger",
    "ToyTransformerBackbone",
    "TrainConfig",
    "Vocab",
    "WordTokenizer",
    "bio_to_spans",
    "bio_transition_masks",
    "build_labeled_thread",
    "build_masked_batch",
    "build_prompt",
    "dataset_stats",
    "distance_error_profile",
    "exact_span_scores",
    "extract_threads",
    "find_markers",
    "get_schema",
    "make_splits",
    "marker_vicinity_split",
    "reconstruct_post_body",
    "relation_scores",
    "serialize_comments",
    "serialize_thread",
    "set_global_attention",
    "spans_to_bio",
    "strip_special_tokens",
    "train_aci",
    "train_rtp",
    "train_smlm",
]
