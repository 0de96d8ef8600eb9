"""Linear-chain CRF over BIO label sequences.

Emissions are per-token unnormalized label scores; the layer owns learned
transition, start and end potentials plus a hard constraint mask that
forbids invalid BIO transitions (I-x may only follow B-x or I-x, and a
sequence may not start with I-x). Masked transitions score -inf, so decoded
sequences always satisfy the BIO grammar. Viterbi ties break toward the
lowest label index.
"""

from __future__ import annotations

from typing import Sequence

import torch
from torch import nn

from .errors import LabelError, NumericError
from .labels import BioSequence

NEG_INF = float("-inf")


def bio_transition_masks(tags: Sequence[str]) -> tuple[torch.Tensor, torch.Tensor]:
    """(start_mask, trans_mask) boolean tensors; True marks an allowed move."""
    k = len(tags)
    start = torch.ones(k, dtype=torch.bool)
    trans = torch.ones(k, k, dtype=torch.bool)
    for j, tag in enumerate(tags):
        if tag.startswith("I-"):
            c = tag[2:]
            start[j] = False
            for i, prev in enumerate(tags):
                if prev not in (f"B-{c}", f"I-{c}"):
                    trans[i, j] = False
    return start, trans


class LinearChainCrf(nn.Module):
    """CRF layer parameterized by transition/start/end potentials."""

    def __init__(
        self,
        tags: Sequence[str],
        constrain: bool = True,
        dtype: torch.dtype = torch.float32,
    ) -> None:
        super().__init__()
        self.tags = list(tags)
        k = len(self.tags)
        self.num_tags = k
        self.trans = nn.Parameter(torch.zeros(k, k, dtype=dtype))
        self.start = nn.Parameter(torch.zeros(k, dtype=dtype))
        self.end = nn.Parameter(torch.zeros(k, dtype=dtype))
        if constrain:
            start_mask, trans_mask = bio_transition_masks(self.tags)
        else:
            start_mask = torch.ones(k, dtype=torch.bool)
            trans_mask = torch.ones(k, k, dtype=torch.bool)
        self.register_buffer("start_mask", start_mask)
        self.register_buffer("trans_mask", trans_mask)

    @classmethod
    def unconstrained(cls, num_tags: int, dtype: torch.dtype = torch.float32) -> "LinearChainCrf":
        return cls([f"t{i}" for i in range(num_tags)], constrain=False, dtype=dtype)

    def _check_emissions(self, emissions: torch.Tensor) -> None:
        if emissions.dim() != 2 or emissions.size(1) != self.num_tags:
            raise ValueError(
                f"emissions must be [length, {self.num_tags}], got {tuple(emissions.shape)}"
            )
        if emissions.size(0) < 1:
            raise ValueError("sequence length must be >= 1")
        if not torch.isfinite(emissions).all():
            raise NumericError("non-finite emission scores")

    def effective_start(self) -> torch.Tensor:
        return torch.where(self.start_mask, self.start, torch.full_like(self.start, NEG_INF))

    def effective_trans(self) -> torch.Tensor:
        return torch.where(self.trans_mask, self.trans, torch.full_like(self.trans, NEG_INF))

    def log_partition(self, emissions: torch.Tensor) -> torch.Tensor:
        """log sum over all label paths of exp(path score), forward algorithm."""
        self._check_emissions(emissions)
        trans = self.effective_trans()
        alpha = self.effective_start() + emissions[0]
        for t in range(1, emissions.size(0)):
            alpha = torch.logsumexp(alpha.unsqueeze(1) + trans, dim=0) + emissions[t]
        return torch.logsumexp(alpha + self.end, dim=0)

    def score_sequence(self, emissions: torch.Tensor, tag_ids: Sequence[int]) -> torch.Tensor:
        self._check_emissions(emissions)
        if len(tag_ids) != emissions.size(0):
            raise ValueError("tag sequence length mismatch")
        ids = torch.as_tensor(list(tag_ids), dtype=torch.long)
        score = self.start[ids[0]] + emissions[0, ids[0]]
        for t in range(1, len(ids)):
            score = score + self.trans[ids[t - 1], ids[t]] + emissions[t, ids[t]]
        return score + self.end[ids[-1]]

    def _check_valid_path(self, tag_ids: Sequence[int]) -> None:
        if not self.start_mask[tag_ids[0]]:
            raise LabelError(f"gold sequence starts with forbidden tag {self.tags[tag_ids[0]]}")
        for a, b in zip(tag_ids, list(tag_ids)[1:]):
            if not self.trans_mask[a, b]:
                raise LabelError(
                    f"gold transition {self.tags[a]} -> {self.tags[b]} violates the constraint mask"
                )

    def nll(self, emissions: torch.Tensor, gold: BioSequence | Sequence[int]) -> torch.Tensor:
        """Negative log-likelihood of the gold path; >= 0 up to rounding."""
        tag_ids = self.tag_ids(gold) if isinstance(gold, BioSequence) else list(gold)
        self._check_valid_path(tag_ids)
        return self.log_partition(emissions) - self.score_sequence(emissions, tag_ids)

    def viterbi_indices(self, emissions: torch.Tensor) -> list[int]:
        """Argmax-scoring valid path; ties resolve to the lowest label index."""
        self._check_emissions(emissions)
        with torch.no_grad():
            trans = self.effective_trans()
            score = self.effective_start() + emissions[0]
            backpointers: list[torch.Tensor] = []
            for t in range(1, emissions.size(0)):
                combined = score.unsqueeze(1) + trans  # [from, to]
                best, bp = combined.max(dim=0)  # first (lowest) index on ties
                score = best + emissions[t]
                backpointers.append(bp)
            score = score + self.end
            last = int(score.argmax())
            path = [last]
            for bp in reversed(backpointers):
                last = int(bp[last])
                path.append(last)
            path.reverse()
            return path

    def decode(self, emissions: torch.Tensor) -> BioSequence:
        return BioSequence([self.tags[i] for i in self.viterbi_indices(emissions)])

    def tag_ids(self, bio: BioSequence) -> list[int]:
        index = {t: i for i, t in enumerate(self.tags)}
        try:
            return [index[lab] for lab in bio.labels]
        except KeyError as exc:
            raise LabelError(f"tag {exc.args[0]!r} not in CRF tag set {self.tags}") from exc
