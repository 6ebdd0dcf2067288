"""Deterministic word rewrites used as transformation edits."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from importlib import resources


class Family(str, enum.Enum):
    ADD_SUFFIX = "ADD_SUFFIX"
    REMOVE_SUFFIX = "REMOVE_SUFFIX"
    REPLACE_SUFFIX = "REPLACE_SUFFIX"
    CASE_CAPITALIZE_FIRST = "CASE_CAPITALIZE_FIRST"
    CASE_LOWER_FIRST = "CASE_LOWER_FIRST"


class TransformTableError(ValueError):
    pass


@dataclass(frozen=True)
class TransformRule:
    id: int
    family: Family
    suffix_from: str = ""
    suffix_to: str = ""

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        if fam is Family.ADD_SUFFIX and (self.suffix_from or not self.suffix_to):
            raise TransformTableError(f"rule {self.id}: ADD_SUFFIX needs only suffix_to")
        if fam is Family.REMOVE_SUFFIX and (not self.suffix_from or self.suffix_to):
            raise TransformTableError(f"rule {self.id}: REMOVE_SUFFIX needs only suffix_from")
        if fam is Family.REPLACE_SUFFIX and not (self.suffix_from and self.suffix_to):
            raise TransformTableError(f"rule {self.id}: REPLACE_SUFFIX needs both suffixes")

    def apply(self, word):
        """Rewrite ``word``, or return None when the rule does not apply."""
        if not word:
            return None
        fam = self.family
        if fam is Family.ADD_SUFFIX:
            return word + self.suffix_to
        if fam is Family.CASE_CAPITALIZE_FIRST:
            return word[0].upper() + word[1:] if word[0].islower() else None
        if fam is Family.CASE_LOWER_FIRST:
            return word[0].lower() + word[1:] if word[0].isupper() else None
        # REMOVE_SUFFIX / REPLACE_SUFFIX: keep a non-empty stem
        if len(word) > len(self.suffix_from) and word.endswith(self.suffix_from):
            return word[: len(word) - len(self.suffix_from)] + self.suffix_to
        return None

    def __str__(self):
        fam = self.family
        if fam is Family.ADD_SUFFIX:
            return f"AddSuffix({self.suffix_to})"
        if fam is Family.REMOVE_SUFFIX:
            return f"RemoveSuffix({self.suffix_from})"
        if fam is Family.REPLACE_SUFFIX:
            return f"ReplaceSuffix({self.suffix_from}->{self.suffix_to})"
        return "CapitalizeFirst" if fam is Family.CASE_CAPITALIZE_FIRST else "LowerFirst"


def inverse_of(rule):
    """The suffix rule undoing ``rule`` (family and suffixes only; id left at -1)."""
    fam = rule.family
    if fam is Family.ADD_SUFFIX:
        return TransformRule(-1, Family.REMOVE_SUFFIX, rule.suffix_to, "")
    if fam is Family.REMOVE_SUFFIX:
        return TransformRule(-1, Family.ADD_SUFFIX, "", rule.suffix_from)
    if fam is Family.REPLACE_SUFFIX:
        return TransformRule(-1, Family.REPLACE_SUFFIX, rule.suffix_to, rule.suffix_from)
    if fam is Family.CASE_CAPITALIZE_FIRST:
        return TransformRule(-1, Family.CASE_LOWER_FIRST)
    return TransformRule(-1, Family.CASE_CAPITALIZE_FIRST)


def _rows_to_table(rows):
    table = []
    for i, row in enumerate(rows):
        row = list(row) + ["", "", ""]
        try:
            table.append(TransformRule(i, Family(row[0].strip()), row[1].strip(), row[2].strip()))
        except ValueError as exc:
            raise TransformTableError(f"row {i + 1}: {exc}") from None
    return table


def read_table(path):
    """Load a transformation table TSV (columns family, suffix_from, suffix_to)."""
    with open(path, newline="", encoding="utf-8") as fh:
        return _parse(fh.read())


def _parse(text):
    rows = [r for r in csv.reader(text.splitlines(), delimiter="\t") if r and any(r)]
    if rows and rows[0][0].strip().lower() == "family":
        rows = rows[1:]
    return _rows_to_table(rows)


def write_table(table, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("family\tsuffix_from\tsuffix_to\n")
        for rule in table:
            fh.write(f"{rule.family.value}\t{rule.suffix_from}\t{rule.suffix_to}\n")


def default_table():
    """29 suffix rules, their 29 inverses, then capitalise-first and lower-first."""
    text = resources.files("piedit.data").joinpath("transforms.tsv").read_text(encoding="utf-8")
    return _parse(text)


def match_transformation(src, dst, table):
    """Id of the first rule in ``table`` mapping ``src`` exactly to ``dst``, else None."""
    for rule in table:
        if rule.apply(src) == dst:
            return rule.id
    return None


def table_digest_rows(table):
    return [[r.family.value, r.suffix_from, r.suffix_to] for r in table]
