"""Text normalization shared by claim voting and benchmark scoring."""

from __future__ import annotations

import re
import unicodedata

_YEAR_PAREN = re.compile(r"\(\s*\d{4}\s*\)")
_WS = re.compile(r"\s+")
_ARTICLES = ("a", "an", "the")


def _strip_punct(text: str) -> str:
    return "".join(ch for ch in text if not unicodedata.category(ch).startswith("P"))


def normalize_text(text: str) -> str:
    """Lowercase, drop punctuation, collapse whitespace."""
    return _WS.sub(" ", _strip_punct(text.lower())).strip()


def normalize_claim(value: str) -> str:
    """Canonical form used as the equality predicate when voting on claims.

    >>> normalize_claim("Guess Who's Coming to Dinner (1967)")
    'guess whos coming to dinner'
    """
    text = normalize_text(_YEAR_PAREN.sub(" ", value))
    head, _, rest = text.partition(" ")
    if head in _ARTICLES and rest:
        text = rest
    return text
