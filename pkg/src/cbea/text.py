"""Token normalization shared by relevance, MMR, shadow matching and payload counts."""

from __future__ import annotations

import string

_PUNCT = str.maketrans("", "", string.punctuation)


def normalize(text: str) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace."""
    return text.lower().translate(_PUNCT).split()


def token_set(text: str) -> frozenset[str]:
    return frozenset(normalize(text))


def whitespace_tokens(text: str) -> int:
    return len(text.split())


def jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def contains_sequence(tokens: list[str], pattern: list[str]) -> bool:
    """True if ``pattern`` occurs contiguously in ``tokens``; ``*`` matches any single token."""
    n, m = len(tokens), len(pattern)
    if m == 0:
        return False
    for i in range(n - m + 1):
        if all(p == "*" or p == t for p, t in zip(pattern, tokens[i : i + m])):
            return True
    return False
