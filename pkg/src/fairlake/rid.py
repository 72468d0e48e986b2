"""Record identifiers: Crockford base-32 over a monotone counter.

A RID is the display form of a 64-bit mint counter: base-32 digits (uppercase,
no I/L/O/U), leading zeros stripped, grouped in 4-char chunks from the right
and joined with dashes ("2-A4F6" is counter value 0x2_A4F6 in base 32).  The
canonical form zero-pads to the full 13 digits so plain string comparison
matches mint order.
"""

from __future__ import annotations

import re
import threading

ALPHABET = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"
_DECODE = {c: i for i, c in enumerate(ALPHABET)}
# 13 base-32 digits cover the full 64-bit counter range.
CANONICAL_WIDTH = 13
_RID_RE = re.compile(r"^[0-9A-HJKMNP-TV-Z]{1,4}(-[0-9A-HJKMNP-TV-Z]{4}){0,3}$")


def encode(counter: int, width: int = 0) -> str:
    """Base-32 digits of ``counter``, optionally zero-padded to ``width``."""
    if counter < 0:
        raise ValueError("counter must be non-negative")
    digits = ""
    n = counter
    while n:
        digits = ALPHABET[n % 32] + digits
        n //= 32
    digits = digits or "0"
    if width:
        digits = digits.rjust(width, "0")
    return digits


def decode(digits: str) -> int:
    n = 0
    for c in digits:
        n = n * 32 + _DECODE[c]
    return n


def format_rid(counter: int) -> str:
    """Display form: stripped digits grouped by 4 from the right."""
    digits = encode(counter)
    groups = []
    while digits:
        groups.append(digits[-4:])
        digits = digits[:-4]
    return "-".join(reversed(groups))


def parse_rid(rid: str) -> int:
    if not is_valid(rid):
        raise ValueError(f"malformed RID: {rid!r}")
    return decode(rid.replace("-", ""))


def is_valid(rid: str) -> bool:
    return bool(_RID_RE.match(rid))


def canonical(rid: str) -> str:
    """Zero-padded ungrouped form; lexicographic order equals mint order."""
    return encode(parse_rid(rid), CANONICAL_WIDTH)


class RidMinter:
    """Thread-safe monotone RID source for one catalog."""

    def __init__(self, last_counter: int = 0):
        self._counter = last_counter
        self._lock = threading.Lock()

    @property
    def last_counter(self) -> int:
        return self._counter

    def mint(self) -> str:
        with self._lock:
            self._counter += 1
            return format_rid(self._counter)

    def restore(self, last_counter: int) -> None:
        with self._lock:
            if last_counter > self._counter:
                self._counter = last_counter
