"""Automatic metrics: corpus BLEU-4, distinct-n, recipe n-gram overlap.

All metrics run on the shared word tokenizer from corpus so that BLEU,
diversity, and overlap agree on what a token is.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Literal, Sequence

from .corpus import Conversation, Recipe, tokenize_words

MAX_BLEU_ORDER = 4


def ngrams(tokens: Sequence[str], n: int) -> Iterator[tuple[str, ...]]:
    """Yield contiguous n-grams; empty when the sequence is shorter than n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    for i in range(len(tokens) - n + 1):
        yield tuple(tokens[i : i + n])


def corpus_bleu4(
    hypotheses: Sequence[str],
    references: Sequence[str],
    smooth: bool = False,
) -> float:
    """Corpus-level BLEU-4 on a 0..100 scale, single reference per hypothesis.

    Modified n-gram precisions are pooled over the corpus, combined with
    uniform 1/4 weights in log space, and scaled by the exponential brevity
    penalty. With smooth=True, add-1 smoothing is applied to the n >= 2
    precisions; otherwise any zero precision makes the score 0.0.
    """
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise ValueError("empty corpus")
    matches = [0] * MAX_BLEU_ORDER
    totals = [0] * MAX_BLEU_ORDER
    hyp_len = 0
    ref_len = 0
    for hypothesis, reference in zip(hypotheses, references):
        hyp_tokens = tokenize_words(hypothesis)
        ref_tokens = tokenize_words(reference)
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        for order in range(1, MAX_BLEU_ORDER + 1):
            hyp_counts = Counter(ngrams(hyp_tokens, order))
            ref_counts = Counter(ngrams(ref_tokens, order))
            matches[order - 1] += sum((hyp_counts & ref_counts).values())
            totals[order - 1] += max(len(hyp_tokens) - order + 1, 0)
    if hyp_len == 0:
        return 0.0
    log_precision_sum = 0.0
    for order in range(1, MAX_BLEU_ORDER + 1):
        m = matches[order - 1]
        t = totals[order - 1]
        if smooth and order >= 2:
            m += 1
            t += 1
        if m == 0 or t == 0:
            return 0.0
        log_precision_sum += math.log(m / t) / MAX_BLEU_ORDER
    brevity = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_precision_sum)


def distinct_n(utterances: Sequence[str], n: int) -> float:
    """Percentage of unique n-grams over total n-grams, pooled over utterances."""
    total = 0
    unique: set[tuple[str, ...]] = set()
    for utterance in utterances:
        for gram in ngrams(tokenize_words(utterance), n):
            total += 1
            unique.add(gram)
    if total == 0:
        raise ValueError(f"no {n}-grams in the utterance pool")
    return 100.0 * len(unique) / total


def avg_length(utterances: Sequence[str]) -> float:
    """Mean utterance length in tokens."""
    if not utterances:
        raise ValueError("no utterances")
    return sum(len(tokenize_words(u)) for u in utterances) / len(utterances)


def recipe_ngram_set(recipe: Recipe, n: int) -> set[tuple[str, ...]]:
    """Union of n-grams over the recipe's step texts (each step tokenized separately)."""
    grams: set[tuple[str, ...]] = set()
    for step in recipe.steps:
        grams.update(ngrams(tokenize_words(step.text), n))
    return grams


Average = Literal["micro", "macro"]
Counting = Literal["token", "type"]


def recipe_ngram_overlap(
    conversations: Sequence[Conversation],
    recipes: Sequence[Recipe],
    n: int,
    average: Average = "micro",
    counting: Counting = "token",
) -> float:
    """Percentage of agent n-grams that also occur in the grounding recipe.

    The default (micro, token) counts every agent-utterance n-gram occurrence
    and pools matches over the corpus. counting="type" collapses each
    conversation's agent n-grams to a set first; average="macro" averages the
    per-conversation fractions instead of pooling.
    """
    recipes_by_id = {r.id: r for r in recipes}
    per_conversation: list[tuple[int, int]] = []
    for conversation in conversations:
        recipe = recipes_by_id.get(conversation.recipe_id)
        if recipe is None:
            raise ValueError(f"conversation {conversation.id} references unknown recipe {conversation.recipe_id}")
        reference = recipe_ngram_set(recipe, n)
        if counting == "token":
            grams: Iterable[tuple[str, ...]] = [
                gram
                for _, turn in conversation.system_turns()
                for gram in ngrams(tokenize_words(turn.text), n)
            ]
        elif counting == "type":
            grams = {
                gram
                for _, turn in conversation.system_turns()
                for gram in ngrams(tokenize_words(turn.text), n)
            }
        else:
            raise ValueError(f"unknown counting {counting!r}")
        grams = list(grams)
        matched = sum(1 for gram in grams if gram in reference)
        per_conversation.append((matched, len(grams)))
    if average == "micro":
        matched = sum(m for m, _ in per_conversation)
        total = sum(t for _, t in per_conversation)
        if total == 0:
            raise ValueError(f"no agent {n}-grams in the corpus")
        return 100.0 * matched / total
    if average == "macro":
        fractions = [m / t for m, t in per_conversation if t > 0]
        if not fractions:
            raise ValueError(f"no agent {n}-grams in the corpus")
        return 100.0 * sum(fractions) / len(fractions)
    raise ValueError(f"unknown average {average!r}")


def agent_utterances(conversations: Sequence[Conversation]) -> list[str]:
    """All system-side utterance texts, in corpus order."""
    return [turn.text for conversation in conversations for _, turn in conversation.system_turns()]


@dataclass(frozen=True)
class EvalReport:
    bleu4: float
    distinct1: float
    distinct2: float
    avg_length: float
    overlap: dict[int, float]

    def to_dict(self) -> dict:
        return {
            "bleu4": self.bleu4,
            "distinct1": self.distinct1,
            "distinct2": self.distinct2,
            "avg_length": self.avg_length,
            "overlap": {str(n): v for n, v in self.overlap.items()},
        }


def evaluate_generation(
    hypotheses: Sequence[str],
    references: Sequence[str],
    smooth: bool = False,
) -> EvalReport:
    """BLEU-4 against references plus diversity and length of the hypotheses."""
    return EvalReport(
        bleu4=corpus_bleu4(hypotheses, references, smooth=smooth),
        distinct1=distinct_n(hypotheses, 1),
        distinct2=distinct_n(hypotheses, 2),
        avg_length=avg_length(hypotheses),
        overlap={},
    )


def diversity_report(
    conversations: Sequence[Conversation],
    recipes: Sequence[Recipe],
    max_overlap_order: int = 5,
) -> dict:
    """Agent-side diversity and recipe-overlap profile, with overlap variants.

    Overlap is reported under the default (micro, token) definition plus the
    macro and type-level variants so discrepancies can be diagnosed.
    """
    utterances = agent_utterances(conversations)
    report: dict = {
        "distinct1": distinct_n(utterances, 1),
        "distinct2": distinct_n(utterances, 2),
        "avg_length": avg_length(utterances),
        "overlap": {},
        "overlap_variants": {},
    }
    for n in range(1, max_overlap_order + 1):
        report["overlap"][n] = recipe_ngram_overlap(conversations, recipes, n)
        report["overlap_variants"][n] = {
            "macro_token": recipe_ngram_overlap(conversations, recipes, n, average="macro"),
            "micro_type": recipe_ngram_overlap(conversations, recipes, n, counting="type"),
            "macro_type": recipe_ngram_overlap(
                conversations, recipes, n, average="macro", counting="type"
            ),
        }
    return report
