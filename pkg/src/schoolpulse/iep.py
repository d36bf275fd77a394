"""Rule-based text analytics over IEP narratives, plus SEN/activity correlation.

The tagger is a deterministic lexicon + suffix-rule tagger (precedence:
exact word > longest matching suffix > digit check > OTHER), which keeps
golden-file tests exact. English whitespace tokenization only; CJK
segmentation is a pluggable non-goal. The lexicon, suffix rules, stopwords
and phrase stoplist ship as versioned data files under ``schoolpulse/data``.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Optional, Sequence

from .records import ActivityCategory, StudentRecord

NOUN, VERB, ADJ, ADV, FUNC, NUM, OTHER = "NOUN", "VERB", "ADJ", "ADV", "FUNC", "NUM", "OTHER"
TAGS = {NOUN, VERB, ADJ, ADV, FUNC, NUM, OTHER}

# Closed accept set for phrase windows.
ACCEPT_PATTERNS: tuple[tuple[str, ...], ...] = (
    (ADJ, NOUN),
    (NOUN, NOUN),
    (VERB, NOUN),
    (ADJ, ADJ, NOUN),
    (NOUN, NOUN, NOUN),
)

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class PosLexicon:
    """word -> tag map plus ordered suffix fallbacks."""

    word_tags: dict[str, str]
    suffix_rules: tuple[tuple[str, str], ...]

    def tag(self, token: str) -> str:
        if token in self.word_tags:
            return self.word_tags[token]
        best: Optional[str] = None
        best_len = 0
        for suffix, tag in self.suffix_rules:  # longest suffix wins, then file order
            if len(suffix) > best_len and token.endswith(suffix) and len(token) > len(suffix):
                best, best_len = tag, len(suffix)
        if best is not None:
            return best
        if token.isdigit():
            return NUM
        return OTHER


@dataclass(frozen=True)
class PhraseRules:
    """Accept patterns (validated against the closed set) and the boundary
    stoplist: a window containing any stoplisted token is never a phrase."""

    patterns: tuple[tuple[str, ...], ...] = ACCEPT_PATTERNS
    stoplist: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        for p in self.patterns:
            if p not in ACCEPT_PATTERNS:
                raise ValueError(f"pattern {p} not in the accept set {ACCEPT_PATTERNS}")


@dataclass(frozen=True)
class WordCloudEntry:
    term: str
    count: int


@dataclass(frozen=True)
class CorrelationCell:
    sen_type: str
    activity_category: str
    phi: Optional[float]
    lift: Optional[float]
    support: int

    def to_dict(self) -> dict:
        return {
            "sen_type": self.sen_type,
            "activity_category": self.activity_category,
            "phi": self.phi,
            "lift": self.lift,
            "support": self.support,
        }


def tokenize(text: str) -> list[str]:
    """Lowercase tokens split on whitespace/punctuation; numerals survive."""
    return _TOKEN_RE.findall(text.lower())


def pos_tag(tokens: Sequence[str], lexicon: PosLexicon) -> list[tuple[str, str]]:
    return [(t, lexicon.tag(t)) for t in tokens]


def extract_phrases(tagged: Sequence[tuple[str, str]], rules: PhraseRules) -> list[str]:
    """All sliding windows of length 2, then 3, that match an accept pattern
    and contain no stoplisted token; overlaps all kept, in window order."""
    phrases: list[str] = []
    for size in (2, 3):
        for i in range(len(tagged) - size + 1):
            window = tagged[i:i + size]
            tags = tuple(tag for _, tag in window)
            if tags not in rules.patterns:
                continue
            if any(tok in rules.stoplist for tok, _ in window):
                continue
            phrases.append(" ".join(tok for tok, _ in window))
    return phrases


def wordcloud_counts(
    docs: Iterable[str],
    lexicon: PosLexicon,
    rules: PhraseRules,
    stopwords: frozenset[str],
    top_n: int,
) -> list[WordCloudEntry]:
    """Counts over content unigrams (NOUN/VERB/ADJ, not stopworded) plus
    extracted phrases, sorted count-desc then term-asc, truncated to top_n."""
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    counts: Counter[str] = Counter()
    for doc in docs:
        tagged = pos_tag(tokenize(doc), lexicon)
        for token, tag in tagged:
            if tag in (NOUN, VERB, ADJ) and token not in stopwords:
                counts[token] += 1
        for phrase in extract_phrases(tagged, rules):
            counts[phrase] += 1
    entries = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [WordCloudEntry(term=t, count=c) for t, c in entries[:top_n]]


def cooccurrence(students: Sequence[StudentRecord]) -> dict[tuple[str, str], tuple[int, int, int, int]]:
    """Per (sen_type, activity category) 2x2 contingency tables over students.

    a = has SEN and participates, b = has SEN only, c = participates only,
    d = neither. Participation is boolean: two Sports activities count once.
    """
    sen_types = sorted({e.sen_type for r in students for e in r.iep})
    tables: dict[tuple[str, str], tuple[int, int, int, int]] = {}
    for sen in sen_types:
        for cat in ActivityCategory:
            a = b = c = d = 0
            for r in students:
                has_sen = any(e.sen_type == sen for e in r.iep)
                participates = any(act.category is cat for act in r.activities)
                if has_sen and participates:
                    a += 1
                elif has_sen:
                    b += 1
                elif participates:
                    c += 1
                else:
                    d += 1
            tables[(sen, cat.value)] = (a, b, c, d)
    return tables


def phi_coefficient(a: int, b: int, c: int, d: int) -> Optional[float]:
    """(ad - bc) / sqrt of the margin product; None when any margin is zero."""
    denom = (a + b) * (c + d) * (a + c) * (b + d)
    if denom == 0:
        return None
    return (a * d - b * c) / math.sqrt(denom)


def lift(a: int, b: int, c: int, d: int) -> Optional[float]:
    n = a + b + c + d
    if (a + b) == 0 or (a + c) == 0 or (c + d) == 0 or (b + d) == 0:
        return None
    return (a * n) / ((a + b) * (a + c))


def correlate(tables: dict[tuple[str, str], tuple[int, int, int, int]]) -> list[CorrelationCell]:
    cells = []
    for (sen, cat), (a, b, c, d) in sorted(tables.items()):
        cells.append(CorrelationCell(
            sen_type=sen,
            activity_category=cat,
            phi=phi_coefficient(a, b, c, d),
            lift=lift(a, b, c, d),
            support=a,
        ))
    return cells


def _read_data(name: str) -> str:
    return resources.files("schoolpulse.data").joinpath(name).read_text(encoding="utf-8")


def load_default_lexicon() -> PosLexicon:
    word_tags = {}
    for line in _read_data("pos_lexicon.tsv").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        word, tag = line.split("\t")
        word_tags[word] = tag
    suffixes = []
    for line in _read_data("pos_suffixes.tsv").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        suffix, tag = line.split("\t")
        suffixes.append((suffix, tag))
    return PosLexicon(word_tags=word_tags, suffix_rules=tuple(suffixes))


def load_default_stopwords() -> frozenset[str]:
    return frozenset(
        w.strip() for w in _read_data("stopwords.txt").splitlines() if w.strip()
    )


def load_default_phrase_rules() -> PhraseRules:
    stop = frozenset(
        w.strip() for w in _read_data("phrase_stoplist.txt").splitlines() if w.strip()
    )
    return PhraseRules(stoplist=stop)
