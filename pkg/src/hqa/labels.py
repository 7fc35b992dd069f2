"""Answer-label normalization shared by every module."""

import re

NONE = "none"

_TRAILING_PUNCT = ".,;:!?"
_WS = re.compile(r"\s+")


def normalize_label(text) -> str:
    """Trim, case-fold, collapse inner whitespace and drop trailing punctuation.

    >>> normalize_label("  Yes. ")
    'yes'
    >>> normalize_label("Pedestrian   Crossing!")
    'pedestrian crossing'
    """
    if text is None:
        return ""
    s = _WS.sub(" ", str(text).strip()).casefold()
    return s.rstrip(_TRAILING_PUNCT).rstrip()
