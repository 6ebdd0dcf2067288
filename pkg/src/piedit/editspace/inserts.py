"""The insert dictionary: most frequent merged insert strings in training diffs."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field

from .diff import INSERT, DiffConfig, modified_levenshtein_diff
from .tokens import WORD, check_mode, payload_tokens


@dataclass
class InsertDictionary:
    entries: list = field(default_factory=list)  # [(insert string, count)], by descending count
    q: int = 2
    M: int = 1000
    mode: str = WORD

    def __post_init__(self):
        check_mode(self.mode)
        self.entries = [(w, int(c)) for w, c in self.entries]
        if len(self.entries) > self.M:
            raise ValueError(f"{len(self.entries)} entries exceed capacity M={self.M}")
        self._index = {w: k for k, (w, _) in enumerate(self.entries)}
        if len(self._index) != len(self.entries):
            raise ValueError("duplicate insert strings in dictionary")

    def __contains__(self, w):
        return w in self._index

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return (w for w, _ in self.entries)

    def index(self, w):
        return self._index[w]

    @property
    def words(self):
        return [w for w, _ in self.entries]

    def tokens_of(self, w):
        return payload_tokens(w, self.mode)

    def to_tsv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("insert_string\tcount\n")
            for w, c in self.entries:
                fh.write(f"{w}\t{c}\n")

    @classmethod
    def from_tsv(cls, path, mode=WORD, q=2, M=None):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE) if r]
        if rows and rows[0][:2] == ["insert_string", "count"]:
            rows = rows[1:]
        entries = [(r[0], int(r[1])) for r in rows]
        return cls(entries, q=q, M=len(entries) if M is None else M, mode=mode)


class AnyInsert:
    """Stand-in dictionary accepting every payload (used for evaluation diffs)."""

    def __contains__(self, w):
        return True


def insert_payloads(x, y, cfg=DiffConfig(), mode=WORD):
    return [op.payload for op in modified_levenshtein_diff(x, y, cfg, mode) if op.kind == INSERT]


def count_inserts(pairs, q, cfg=DiffConfig(), mode=WORD):
    """Counter of merged insert payloads with at most ``q`` tokens, plus the number of longer runs."""
    counts = Counter()
    too_long = 0
    for x, y in pairs:
        for w in insert_payloads(x, y, cfg, mode):
            if len(payload_tokens(w, mode)) <= q:
                counts[w] += 1
            else:
                too_long += 1
    return counts, too_long


def top_entries(counts, M):
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:M]


def build_insert_dictionary(pairs, M=1000, q=2, cfg=DiffConfig(), mode=WORD):
    """Top-``M`` merged inserts (by count, ties lexicographic) of at most ``q`` tokens."""
    if M < 0 or q < 1:
        raise ValueError("need M >= 0 and q >= 1")
    counts, _ = count_inserts(pairs, q, cfg, mode)
    return InsertDictionary(top_entries(counts, M), q=q, M=M, mode=mode)
