"""Message cleaning, tokenization and suffix-based lemmatization.

Cleaning lowercases, strips timestamp-shaped substrings and replaces
punctuation with spaces while keeping '.', '_', '-' inside tokens and '/'
next to word characters, so identifiers like eth0.100 and /usr/bin survive.
Stop-word removal is a separate step: the clustering path never applies it,
the keyphrase path relies on stop words as phrase delimiters.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

# Shapes treated as timestamps, applied in order after lowercasing. Composite
# forms (full datetime, syslog month) must run before the date-only and
# time-only forms or they are left half-eaten. The lookarounds block only on
# alphanumerics (the characters cleaning always keeps), which is what makes
# clean() idempotent.
DEFAULT_TIMESTAMP_PATTERNS: tuple[str, ...] = (
    r"(?<![^\W_])\d{4}-\d{2}-\d{2}[ t]\d{1,2}:\d{2}:\d{2}(?:[.,]\d+)?(?:z|[+-]\d{2}:?\d{2})?(?![^\W_])",
    r"(?<![^\W_])(?:jan|feb|mar|apr|may|jun|jul|aug|sep|oct|nov|dec) +\d{1,2} +\d{1,2}:\d{2}:\d{2}(?![^\W_])",
    r"(?<![^\W_])\d{4}-\d{2}-\d{2}(?![^\W_])",
    r"(?<![^\W_])\d{1,2}:\d{2}:\d{2}(?:[.,]\d+)?(?![^\W_])",
    r"(?<![^\W_])\d{10,13}(?:\.\d+)?(?![^\W_])",
)

_INTRA_TOKEN = frozenset("._-")

DEFAULT_STOPWORDS: frozenset[str] = frozenset(
    """
    a about above after again against all also am an and any are as at be
    because been before being below between both but by can cannot could did
    do does doing down during each few for from further had has have having
    he her here hers herself him himself his how i if in into is it its
    itself just me more most my myself no nor not now of off on once only or
    other our ours ourselves out over own same she should so some such than
    that the their theirs them themselves then there these they this those
    through to too under until up very was we were what when where which
    while who whom why will with would you your yours yourself yourselves
    """.split()
)

# Irregular forms the suffix rules get wrong; token -> lemma.
DEFAULT_LEMMA_EXCEPTIONS: dict[str, str] = {
    "timing": "time",
    "timed": "time",
    "lost": "lose",
    "sent": "send",
    "left": "leave",
    "went": "go",
    "found": "find",
    "caught": "catch",
    "broken": "break",
    "written": "write",
}

_VOWELS = frozenset("aeiou")


def _compile(patterns: Sequence[str | re.Pattern] | None) -> list[re.Pattern]:
    if patterns is None:
        patterns = DEFAULT_TIMESTAMP_PATTERNS
    return [p if isinstance(p, re.Pattern) else re.compile(p) for p in patterns]


def clean(message: str, timestamp_patterns: Sequence[str | re.Pattern] | None = None) -> str:
    """Normalize a raw log message to lowercase space-separated tokens.

    Idempotent: clean(clean(x)) == clean(x).
    """
    text = message.lower()
    for pattern in _compile(timestamp_patterns):
        text = pattern.sub(" ", text)
    chars: list[str] = []
    last = len(text) - 1
    for i, ch in enumerate(text):
        if ch.isalnum():
            chars.append(ch)
            continue
        prev_ok = i > 0 and text[i - 1].isalnum()
        next_ok = i < last and text[i + 1].isalnum()
        if ch in _INTRA_TOKEN and prev_ok and next_ok:
            chars.append(ch)
        elif ch == "/" and (prev_ok or next_ok):
            chars.append(ch)
        else:
            chars.append(" ")
    return " ".join("".join(chars).split())


def tokenize(cleaned: str) -> list[str]:
    """Split a cleaned message on whitespace."""
    return cleaned.split()


def _strip_suffix(token: str) -> str:
    n = len(token)
    if n >= 5 and token.endswith("ies"):
        return token[:-3] + "y"
    if n >= 5 and token.endswith("ied"):
        return token[:-3] + "y"
    if token.endswith("es") and n - 2 >= 3:
        stem = token[:-2]
        if stem.endswith(("s", "x", "z", "ch", "sh")):
            return stem
    if token.endswith("s") and not token.endswith(("ss", "us", "is")) and n - 1 >= 3:
        return token[:-1]
    for suffix in ("ing", "ed"):
        if token.endswith(suffix) and n - len(suffix) >= 3:
            stem = token[: -len(suffix)]
            if (
                len(stem) > 3
                and stem[-1] == stem[-2]
                and stem[-1] not in _VOWELS
                and stem[-1] not in "lsz"
            ):
                stem = stem[:-1]
            return stem
    return token


def lemmatize(tokens: Iterable[str], exceptions: dict[str, str] | None = None) -> list[str]:
    """Reduce inflected tokens to a base form.

    The exception table is consulted first, then one suffix rule applies
    (-ies/-ied, plural -s/-es, -ing, -ed) guarded by a minimum stem length
    of three characters. Tokens containing digits or path separators pass
    through unchanged. Never lengthens and never empties a token.
    """
    table = exceptions if exceptions is not None else DEFAULT_LEMMA_EXCEPTIONS
    out: list[str] = []
    for token in tokens:
        if token in table:
            out.append(table[token])
        elif any(c.isdigit() for c in token) or "/" in token:
            out.append(token)
        else:
            out.append(_strip_suffix(token))
    return out


def remove_stopwords(tokens: Iterable[str], stopwords: frozenset[str] | set[str] | None = None) -> list[str]:
    """Drop stop words; used for summaries, never for clustering features."""
    stops = stopwords if stopwords is not None else DEFAULT_STOPWORDS
    return [t for t in tokens if t not in stops]


def load_stopwords(path: str | Path) -> frozenset[str]:
    """Load a stop-word file, one word per line; blank lines ignored."""
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        word = line.strip().lower()
        if word:
            words.add(word)
    return frozenset(words)


def load_lemma_exceptions(path: str | Path) -> dict[str, str]:
    """Load a lemma exception table of tab-separated `token<TAB>lemma` lines."""
    table: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
            raise ValueError(f"lemma exceptions line {lineno}: expected 'token<TAB>lemma'")
        table[parts[0].strip()] = parts[1].strip()
    return table


@dataclass(frozen=True)
class CleanDocument:
    """A record's message after cleaning and lemmatization."""

    record_id: str
    raw: str
    cleaned: str
    tokens: tuple[str, ...]
    empty: bool

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def clean_document(
    record_id: str,
    message: str,
    timestamp_patterns: Sequence[str | re.Pattern] | None = None,
    exceptions: dict[str, str] | None = None,
) -> CleanDocument:
    """Run the full preprocessing chain for one message."""
    cleaned = clean(message, timestamp_patterns)
    tokens = tuple(lemmatize(tokenize(cleaned), exceptions))
    return CleanDocument(
        record_id=record_id,
        raw=message,
        cleaned=cleaned,
        tokens=tokens,
        empty=not tokens,
    )
