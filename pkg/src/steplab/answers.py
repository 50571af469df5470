"""Answer extraction, normalization, and verification.

The verification rule set is a declared convention, kept configurable: the
answer is the last match of a configured pattern (else the final non-empty
line), and comparison happens on a normalized form (trimmed, case-folded,
trailing punctuation stripped, numbers canonicalized) with a 1e-6 relative
tolerance for parseable numbers.
"""

from __future__ import annotations

import math
import re
from typing import Sequence

DEFAULT_ANSWER_PATTERNS: tuple[str, ...] = (
    r"(?im)\bfinal\s+answer\s*[:=]?\s*(?P<ans>.+?)\s*$",
    r"(?im)\bthe\s+answer\s+is\s*[:=]?\s*(?P<ans>.+?)\s*$",
    r"(?im)^\s*answer\s*[:=]\s*(?P<ans>.+?)\s*$",
)

_TRAILING_PUNCT = ".,;:!?"
_REL_TOL = 1e-6


def extract_answer(text: str, patterns: Sequence[str] = DEFAULT_ANSWER_PATTERNS) -> str | None:
    """Last match of the first pattern that matches; else the final non-empty line."""
    for pattern in patterns:
        matches = list(re.finditer(pattern, text))
        if matches:
            return matches[-1].group("ans")
    for line in reversed(text.splitlines()):
        if line.strip():
            return line.strip()
    return None


def parse_number(text: str) -> float | None:
    try:
        value = float(text)
    except ValueError:
        return None
    return value


def normalize_answer(text: str) -> str:
    """Canonical comparison key: trim, strip trailing punctuation, case-fold,
    and collapse parseable numbers to a canonical decimal form ("5.0" -> "5")."""
    cleaned = text.strip().rstrip(_TRAILING_PUNCT + " \t").strip()
    number = parse_number(cleaned)
    if number is not None:
        if math.isfinite(number) and number == int(number) and abs(number) < 1e15:
            return str(int(number))
        return repr(number)
    return cleaned.casefold()


def answers_match(left: str, right: str, rel_tol: float = _REL_TOL) -> bool:
    a, b = normalize_answer(left), normalize_answer(right)
    if a == b:
        return True
    x, y = parse_number(a), parse_number(b)
    if x is not None and y is not None and math.isfinite(x) and math.isfinite(y):
        return math.isclose(x, y, rel_tol=rel_tol, abs_tol=1e-12)
    return False


def verify_answer(
    completion_text: str,
    ground_truth: str,
    patterns: Sequence[str] = DEFAULT_ANSWER_PATTERNS,
) -> bool:
    """True iff the extracted answer matches the ground truth after normalization.

    An unextractable answer (or an empty ground truth) verifies as false.
    """
    if not ground_truth.strip():
        return False
    extracted = extract_answer(completion_text, patterns)
    if extracted is None:
        return False
    return answers_match(extracted, ground_truth)
