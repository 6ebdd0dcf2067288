"""Edit space: alignment, insert dictionary, transformations, edit compilation."""

from .diff import DiffConfig, DiffOp, InputTooLongError, align, diff_cost, modified_levenshtein_diff
from .edits import (
    COPY,
    DELETE,
    EditError,
    EditOp,
    append,
    apply_edits,
    edits_from_record,
    edits_to_record,
    format_edits,
    read_edit_lines,
    replace,
    seq2edits,
    transform,
    write_edit_lines,
)
from .inserts import AnyInsert, InsertDictionary, build_insert_dictionary, count_inserts
from .tokens import (
    BOS,
    CHAR,
    EOS,
    SPACE,
    WORD,
    TokenError,
    check_wrapped,
    detokenize,
    encode_line,
    payload_tokens,
    tokenize,
    unwrap,
    wrap,
)
from .transforms import (
    Family,
    TransformRule,
    TransformTableError,
    default_table,
    inverse_of,
    match_transformation,
    read_table,
    write_table,
)

__all__ = [name for name in dir() if not name.startswith("_")]
