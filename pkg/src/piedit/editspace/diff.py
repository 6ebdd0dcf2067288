"""Levenshtein alignment with a length-aware substitution cost.

Substituting ``a`` by ``b`` costs ``1 + epsilon * |len(a) - len(b)|`` while
inserts and deletes cost 1, so among equally short edit scripts the one
pairing words of similar length wins.  The alignment is post-processed into
copy / delete / insert triples anchored on source positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

from .tokens import WORD, join_payload

COPY, DELETE, INSERT, SUBSTITUTE = "C", "D", "I", "S"


class InputTooLongError(ValueError):
    pass


@dataclass(frozen=True)
class DiffConfig:
    epsilon: float = 0.001
    insert_cost: float = 1.0
    delete_cost: float = 1.0
    max_length: int = 512

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    def substitution_cost(self, a, b):
        return 1.0 + self.epsilon * abs(len(a) - len(b))

    def check_offsets(self, max_word_length):
        """True when the length offset can only break ties, never flip an op mix."""
        return self.epsilon * max_word_length < 1.0


class DiffOp(NamedTuple):
    kind: str  # "C", "D" or "I"
    anchor: int  # source position the op is attached to
    payload: Optional[str] = None  # inserted string, I only

    def __str__(self):
        if self.kind == INSERT:
            return f"(I,{self.anchor},{self.payload!r})"
        return f"({self.kind},{self.anchor})"


def _table(x, y, cfg):
    n, m = len(x), len(y)
    if max(n, m) > cfg.max_length:
        raise InputTooLongError(f"sequence of {max(n, m)} tokens exceeds max_length={cfg.max_length}")
    ins, dele = cfg.insert_cost, cfg.delete_cost
    cost = [[0.0] * (m + 1) for _ in range(n + 1)]
    for j in range(1, m + 1):
        cost[0][j] = cost[0][j - 1] + ins
    for i in range(1, n + 1):
        row, prev = cost[i], cost[i - 1]
        row[0] = prev[0] + dele
        xi = x[i - 1]
        for j in range(1, m + 1):
            yj = y[j - 1]
            diag = prev[j - 1] + (0.0 if xi == yj else cfg.substitution_cost(xi, yj))
            up = prev[j] + dele
            left = row[j - 1] + ins
            row[j] = min(diag, up, left)
    return cost


def _close(a, b):
    return abs(a - b) <= 1e-9 * max(1.0, abs(a), abs(b))


def align(x, y, cfg=DiffConfig()):
    """Minimum-cost alignment as raw ops plus its cost.

    Raw ops are ``(kind, i, j)`` with kind in C/S/D/I and ``i``/``j`` the
    0-based source / target token consumed (``None`` when not consumed).
    Walking back from the end, ties prefer substitution (or copy), then
    insert, then delete.
    """
    cost = _table(x, y, cfg)
    i, j = len(x), len(y)
    ops = []
    while i > 0 or j > 0:
        here = cost[i][j]
        if i > 0 and j > 0:
            same = x[i - 1] == y[j - 1]
            step = 0.0 if same else cfg.substitution_cost(x[i - 1], y[j - 1])
            if _close(cost[i - 1][j - 1] + step, here):
                ops.append((COPY if same else SUBSTITUTE, i - 1, j - 1))
                i, j = i - 1, j - 1
                continue
        if j > 0 and _close(cost[i][j - 1] + cfg.insert_cost, here):
            ops.append((INSERT, None, j - 1))
            j -= 1
            continue
        ops.append((DELETE, i - 1, None))
        i -= 1
    ops.reverse()
    return ops, cost[len(x)][len(y)]


def diff_cost(x, y, cfg=DiffConfig()):
    return _table(x, y, cfg)[len(x)][len(y)]


def modified_levenshtein_diff(x, y, cfg=DiffConfig(), mode=WORD):
    """Copy/delete/insert triples turning ``x`` into ``y``.

    Substitutions become a delete followed by an insert at the same anchor,
    and consecutive inserts on one anchor are merged into a single payload
    (space-joined words in word mode, concatenated characters in char mode).
    An insert is anchored on the last source token consumed before it.
    """
    raw, _ = align(x, y, cfg)
    out = []
    pending = []  # tokens waiting to be flushed as one insert
    anchor = -1

    def flush():
        if pending:
            if anchor < 0:
                raise ValueError("insert before the first source token; wrap sequences with boundary markers")
            out.append(DiffOp(INSERT, anchor, join_payload(pending, mode)))
            pending.clear()

    for kind, i, j in raw:
        if kind == INSERT:
            pending.append(y[j])
            continue
        flush()
        anchor = i
        if kind == COPY:
            out.append(DiffOp(COPY, i))
        elif kind == DELETE:
            out.append(DiffOp(DELETE, i))
        else:
            out.append(DiffOp(DELETE, i))
            pending.append(y[j])
    flush()
    return out
