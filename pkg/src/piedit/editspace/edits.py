"""In-place edit labels: compiling (source, target) pairs and applying edits."""

from __future__ import annotations

import json
from typing import NamedTuple, Optional

from .diff import COPY as DIFF_COPY
from .diff import DELETE as DIFF_DELETE
from .diff import DiffConfig, modified_levenshtein_diff
from .tokens import BOS, EOS, WORD, check_wrapped, payload_tokens
from .transforms import match_transformation

C, D, A, R, T = "C", "D", "A", "R", "T"
KINDS = (C, D, A, R, T)


class EditError(ValueError):
    pass


class EditOp(NamedTuple):
    kind: str
    arg: Optional[str] = None
    rule: Optional[int] = None

    def __str__(self):
        if self.kind in (A, R):
            return f"{self.kind}({self.arg})"
        if self.kind == T:
            return f"T{self.rule}"
        return self.kind

    def validate(self):
        if self.kind not in KINDS:
            raise EditError(f"unknown edit kind {self.kind!r}")
        if (self.arg is not None) != (self.kind in (A, R)):
            raise EditError(f"{self}: argument present iff append/replace")
        if (self.rule is not None) != (self.kind == T):
            raise EditError(f"{self}: rule id present iff transform")
        return self


COPY = EditOp(C)
DELETE = EditOp(D)


def append(w):
    return EditOp(A, arg=w)


def replace(w):
    return EditOp(R, arg=w)


def transform(rule_id):
    return EditOp(T, rule=int(rule_id))


def seq2edits(x, y, inserts, table, cfg=DiffConfig(), mode=WORD):
    """One edit per token of ``x`` so that applying them rebuilds ``y`` where possible.

    Inserts whose payload is not in ``inserts`` are dropped (the position
    keeps its copy), so reconstruction is exact only when every needed
    payload is in the dictionary or the replaced word is reachable by a
    transformation rule.
    """
    check_wrapped(x)
    check_wrapped(y)
    edits = [None] * len(x)
    for op in modified_levenshtein_diff(x, y, cfg, mode):
        i = op.anchor
        if op.kind == DIFF_COPY:
            edits[i] = COPY
        elif op.kind == DIFF_DELETE:
            edits[i] = DELETE
        elif edits[i] == DELETE:
            rule = match_transformation(x[i], op.payload, table) if table else None
            if rule is not None:
                edits[i] = transform(rule)
            else:
                edits[i] = replace(op.payload) if op.payload in inserts else COPY
        elif edits[i] == COPY:
            edits[i] = append(op.payload) if op.payload in inserts else COPY
    return edits


def apply_edits(x, edits, table, mode=WORD):
    """Emit the edited token sequence.

    Boundary markers are always emitted unchanged; the start marker still
    honours an append (sentence-initial insertion), the end marker never
    does.  A transformation that does not apply leaves its token as is.
    """
    if len(edits) != len(x):
        raise EditError(f"edit sequence has {len(edits)} labels for {len(x)} tokens")
    rules = {rule.id: rule for rule in table}
    out = []
    for tok, e in zip(x, edits):
        kind = e.kind
        if tok == EOS:
            out.append(tok)
        elif tok == BOS:
            out.append(tok)
            if kind == A:
                out.extend(payload_tokens(e.arg, mode))
        elif kind == C:
            out.append(tok)
        elif kind == D:
            pass
        elif kind == A:
            out.append(tok)
            out.extend(payload_tokens(e.arg, mode))
        elif kind == R:
            out.extend(payload_tokens(e.arg, mode))
        elif kind == T:
            rule = rules.get(e.rule)
            if rule is None:
                raise EditError(f"transformation id {e.rule} not in table")
            new = rule.apply(tok)
            out.append(tok if new is None else new)
        else:
            raise EditError(f"unknown edit kind {kind!r}")
    return tuple(out)


def format_edits(edits):
    return " ".join(str(e) for e in edits)


# ----------------------------------------------------------- edit JSON lines


def edits_to_record(edits):
    items = []
    for pos, e in enumerate(edits):
        item = {"pos": pos, "op": e.kind}
        if e.arg is not None:
            item["arg"] = e.arg
        if e.rule is not None:
            item["rule"] = e.rule
        items.append(item)
    return {"edits": items}


def edits_from_record(record):
    items = sorted(record["edits"], key=lambda it: it["pos"])
    if [it["pos"] for it in items] != list(range(len(items))):
        raise EditError("edit record positions must be 0..n-1")
    return [EditOp(it["op"], it.get("arg"), it.get("rule")).validate() for it in items]


def write_edit_lines(sequences, path):
    with open(path, "w", encoding="utf-8") as fh:
        for edits in sequences:
            fh.write(json.dumps(edits_to_record(edits), ensure_ascii=False) + "\n")


def read_edit_lines(path):
    with open(path, encoding="utf-8") as fh:
        return [edits_from_record(json.loads(line)) for line in fh if line.strip()]
