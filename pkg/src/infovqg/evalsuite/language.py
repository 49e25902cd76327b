"""Corpus BLEU and CIDEr over tokenized questions."""

from __future__ import annotations

import math
from collections import Counter
from typing import Optional, Sequence

from ..errors import DataError


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _as_refs(ref) -> list:
    """Normalize one reference entry to a list of token lists."""
    if isinstance(ref, str):
        return [ref.split()]
    if ref and not isinstance(ref[0], str):
        return [r.split() if isinstance(r, str) else list(r) for r in ref]
    return [list(ref)]


def _as_tokens(c) -> list:
    return c.split() if isinstance(c, str) else list(c)


def bleu_n(candidates: Sequence, references: Sequence, n: int = 4) -> float:
    """Corpus-level BLEU with clipped n-gram precision and brevity penalty.

    Each reference entry may be one token list or a list of alternatives.
    Orders 1..n are combined with a uniform geometric mean; no smoothing.
    """
    if not 1 <= n <= 4:
        raise ValueError("n must be in 1..4")
    if len(candidates) != len(references):
        raise DataError("candidates and references differ in length")
    if not candidates:
        raise DataError("empty corpus")
    matched = [0] * n
    total = [0] * n
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        cand, refs = _as_tokens(cand), _as_refs(ref)
        cand_len += len(cand)
        # closest reference length, shorter wins ties
        ref_len += min((abs(len(r) - len(cand)), len(r)) for r in refs)[1]
        for k in range(1, n + 1):
            counts = ngrams(cand, k)
            max_ref = Counter()
            for r in refs:
                max_ref |= ngrams(r, k)
            matched[k - 1] += sum(min(c, max_ref[g]) for g, c in counts.items())
            total[k - 1] += sum(counts.values())
    if cand_len == 0 or any(m == 0 for m in matched):
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matched, total)) / n
    bp = 1.0 if cand_len >= ref_len else math.exp(1 - ref_len / cand_len)
    return bp * math.exp(log_p)


def document_frequency(corpus: Sequence, max_n: int = 4) -> Counter:
    """Number of images whose reference set contains each n-gram."""
    df = Counter()
    for refs in corpus:
        seen = set()
        for r in _as_refs(refs):
            for k in range(1, max_n + 1):
                seen.update(ngrams(r, k))
        df.update(seen)
    return df


def _tfidf(tokens: Sequence[str], n: int, df: Counter, log_n: float) -> dict:
    return {g: c * (log_n - math.log(max(1.0, df[g]))) for g, c in ngrams(tokens, n).items()}


def _cosine(a: dict, b: dict) -> float:
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0 or nb == 0:
        return 0.0
    return sum(v * b.get(g, 0.0) for g, v in a.items()) / (na * nb)


def cider_pair(candidate: Sequence[str], reference: Sequence[str], df: Counter,
               num_docs: int, max_n: int = 4) -> float:
    """Mean over orders of the tf-idf cosine between two sentences, times 10."""
    log_n = math.log(float(num_docs))
    cand, ref = _as_tokens(candidate), _as_tokens(reference)
    return 10.0 * sum(_cosine(_tfidf(cand, k, df, log_n), _tfidf(ref, k, df, log_n))
                      for k in range(1, max_n + 1)) / max_n


def cider(candidates: Sequence, references: Sequence, corpus: Optional[Sequence] = None,
          max_n: int = 4) -> float:
    """Corpus CIDEr: per-image consensus score averaged over images.

    ``corpus`` supplies document frequencies (one entry of references per
    image) and defaults to ``references``.
    """
    if len(candidates) != len(references):
        raise DataError("candidates and references differ in length")
    corpus = references if corpus is None else corpus
    if not candidates or not corpus:
        raise DataError("empty corpus")
    df = document_frequency(corpus, max_n)
    scores = []
    for cand, ref in zip(candidates, references):
        refs = _as_refs(ref)
        scores.append(sum(cider_pair(cand, r, df, len(corpus), max_n) for r in refs) / len(refs))
    return sum(scores) / len(scores)
