"""Tokenisation modes and boundary markers.

Sequences are plain tuples of strings.  A *wrapped* sequence starts with
``"["`` and ends with ``"]"``; neither marker may appear anywhere else.
"""

from __future__ import annotations

BOS = "["
EOS = "]"
MARKERS = (BOS, EOS)

WORD = "word"
CHAR = "char"
MODES = (WORD, CHAR)

# char mode keeps spaces as a visible token so detokenisation round-trips
SPACE = "▁"


class TokenError(ValueError):
    pass


def check_mode(mode):
    if mode not in MODES:
        raise TokenError(f"unknown tokenisation mode {mode!r}; expected one of {MODES}")
    return mode


def tokenize(text, mode=WORD):
    """Split a line into tokens (no boundary markers)."""
    check_mode(mode)
    if mode == WORD:
        tokens = text.split()
    else:
        tokens = [SPACE if ch == " " else ch for ch in " ".join(text.split())]
    for tok in tokens:
        if tok in MARKERS:
            raise TokenError(f"token {tok!r} collides with a boundary marker in {text!r}")
    return tuple(tokens)


def detokenize(tokens, mode=WORD):
    check_mode(mode)
    body = [t for t in tokens if t not in MARKERS]
    if mode == WORD:
        return " ".join(body)
    return "".join(" " if t == SPACE else t for t in body)


def wrap(tokens):
    return (BOS, *tokens, EOS)


def unwrap(tokens):
    check_wrapped(tokens)
    return tuple(tokens[1:-1])


def is_wrapped(tokens):
    return (
        len(tokens) >= 2
        and tokens[0] == BOS
        and tokens[-1] == EOS
        and not any(t in MARKERS for t in tokens[1:-1])
    )


def check_wrapped(tokens):
    if not is_wrapped(tokens):
        raise TokenError(f"sequence is not boundary-wrapped: {' '.join(tokens)[:80]!r}")


def encode_line(text, mode=WORD):
    """Tokenise and wrap in one go."""
    return wrap(tokenize(text, mode))


def payload_tokens(payload, mode=WORD):
    """Tokens of an insert payload (space-joined words, or a character run)."""
    if mode == WORD:
        return tuple(payload.split(" "))
    return tuple(payload)


def join_payload(tokens, mode=WORD):
    return (" " if mode == WORD else "").join(tokens)
