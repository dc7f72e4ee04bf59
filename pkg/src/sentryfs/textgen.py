"""Word n-gram text synthesis for honey-file bodies.

A small corpus-trained chain is enough to make decoy text that reads
like real prose to a content-matching attacker; the model sits behind
train/generate so a stronger generator can replace it without touching
callers.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Union

from .errors import CorpusTooSmall

START = "\x02"
END = "\x03"


@dataclass
class NGramModel:
    order: int  # n: context is the previous n-1 tokens
    transitions: dict[tuple[str, ...], Counter] = field(default_factory=dict)
    vocabulary: set[str] = field(default_factory=set)

    def context_for_start(self) -> tuple[str, ...]:
        return (START,) * (self.order - 1)


def train_ngram(corpus: Union[str, Iterable[str]], n: int = 2) -> NGramModel:
    """Count n-gram transitions line by line.

    Each corpus line is padded with n-1 start sentinels and one end
    sentinel, so a line of k tokens contributes k+1 transitions. Counts
    equal corpus n-gram frequencies exactly.
    """
    if n < 2:
        raise ValueError("order must be >= 2")
    lines = corpus.splitlines() if isinstance(corpus, str) else list(corpus)
    model = NGramModel(order=n)
    total_tokens = 0
    for line in lines:
        tokens = line.split()
        if not tokens:
            continue
        total_tokens += len(tokens)
        padded = [START] * (n - 1) + tokens + [END]
        for i in range(len(padded) - n + 1):
            ctx = tuple(padded[i:i + n - 1])
            model.transitions.setdefault(ctx, Counter())[padded[i + n - 1]] += 1
        model.vocabulary.update(tokens)
    if total_tokens < n:
        raise CorpusTooSmall(f"need at least {n} tokens, got {total_tokens}")
    return model


def generate_text(model: NGramModel, word_count: int, seed: int) -> str:
    """Emit exactly word_count tokens of chain-generated text.

    Hitting the end sentinel (or an unseen context) starts a new output
    line, so every adjacent n-gram within a line occurred in the corpus.
    Deterministic per seed.
    """
    if word_count <= 0:
        return ""
    rng = random.Random(seed)
    lines: list[list[str]] = [[]]
    ctx = model.context_for_start()
    emitted = 0
    while emitted < word_count:
        successors = model.transitions.get(ctx)
        if successors is None:
            token = END
        else:
            choices = list(successors.keys())
            weights = list(successors.values())
            token = rng.choices(choices, weights=weights)[0]
        if token == END:
            if lines[-1]:
                lines.append([])
            ctx = model.context_for_start()
            continue
        lines[-1].append(token)
        emitted += 1
        ctx = ctx[1:] + (token,)
    return "\n".join(" ".join(line) for line in lines if line)
