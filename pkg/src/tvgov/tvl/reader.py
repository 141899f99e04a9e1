"""Reader for the TVL declaration format.

The accepted grammar is a YAML subset: block mappings, block sequences, flow
mappings/sequences (which may span lines), plain and quoted scalars, and `#`
comments. Anchors, aliases, tags, block scalars, directives, and multi-document
streams are rejected. One deliberate extension over strict YAML: a plain scalar
in flow-mapping value position may contain `[`/`]` (so type tokens like
`enum[str]` parse), because such a scalar only ends at `,` or `}`.

Canonical JSON is inside the accepted grammar (flow collections with
double-quoted strings), so documents emitted by the canonical serializer read
back with this same reader.

Output is plain Python data: dict / list / str / int / float / bool / None.
All errors carry 1-based line/column positions.
"""

from __future__ import annotations

import re

from tvgov.errors import TvlSyntaxError

_INT_RE = re.compile(r"[-+]?(0|[1-9][0-9]*|0[0-9]+)\Z")
_FLOAT_RE = re.compile(
    r"[-+]?((\d+\.\d*)|(\.\d+)|(\d+))([eE][-+]?\d+)?\Z"
)
# Characters that may not start a plain scalar: YAML indicators we either
# handle structurally or refuse to support.
_UNSUPPORTED_LEAD = {
    "&": "anchors are not supported",
    "*": "aliases are not supported",
    "!": "tags are not supported",
    "|": "block scalars are not supported",
    ">": "block scalars are not supported",
    "%": "directives are not supported",
    "@": "reserved indicator '@'",
    "`": "reserved indicator '`'",
}

_BLOCK, _FLOW_MAP, _FLOW_SEQ = "block", "flow_map", "flow_seq"


class _Reader:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1
        self.col = 1

    # -- low-level cursor ---------------------------------------------------

    def _peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _advance(self, n: int = 1) -> None:
        for _ in range(n):
            if self.pos >= len(self.text):
                return
            if self.text[self.pos] == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
            self.pos += 1

    def _error(self, message: str) -> TvlSyntaxError:
        return TvlSyntaxError(message, self.line, self.col)

    def _at_eof(self) -> bool:
        return self.pos >= len(self.text)

    def _skip_inline_space(self) -> None:
        while self._peek() in (" ", "\t"):
            self._advance()

    def _skip_comment_to_eol(self) -> None:
        while not self._at_eof() and self._peek() != "\n":
            self._advance()

    def _at_comment(self) -> bool:
        return self._peek() == "#"

    def _skip_flow_filler(self) -> None:
        """Skip spaces, newlines, and comments between flow tokens."""
        while True:
            ch = self._peek()
            if ch in (" ", "\t", "\n"):
                self._advance()
            elif ch == "#":
                self._skip_comment_to_eol()
            else:
                return

    def _skip_blank_lines(self) -> None:
        """Skip whole lines that are blank or comment-only (block context)."""
        while not self._at_eof():
            mark = self.pos
            mark_line, mark_col = self.line, self.col
            self._skip_inline_space()
            if self._peek() == "\n":
                self._advance()
                continue
            if self._at_comment():
                self._skip_comment_to_eol()
                continue
            if self._at_eof():
                return
            self.pos, self.line, self.col = mark, mark_line, mark_col
            return

    def _current_indent(self) -> int:
        """Measure indentation of the current line; cursor ends on first token."""
        indent = 0
        while self._peek() == " ":
            indent += 1
            self._advance()
        if self._peek() == "\t":
            raise self._error("tab characters are not allowed in indentation")
        return indent

    # -- scalars ------------------------------------------------------------

    def _parse_quoted(self) -> str:
        quote = self._peek()
        self._advance()
        out: list[str] = []
        if quote == "'":
            while True:
                ch = self._peek()
                if self._at_eof() or ch == "\n":
                    raise self._error("unterminated single-quoted string")
                if ch == "'":
                    self._advance()
                    if self._peek() == "'":
                        out.append("'")
                        self._advance()
                        continue
                    return "".join(out)
                out.append(ch)
                self._advance()
        # double-quoted: JSON-style escapes
        while True:
            ch = self._peek()
            if self._at_eof() or ch == "\n":
                raise self._error("unterminated double-quoted string")
            if ch == '"':
                self._advance()
                return "".join(out)
            if ch == "\\":
                self._advance()
                esc = self._peek()
                mapping = {
                    '"': '"', "\\": "\\", "/": "/", "b": "\b",
                    "f": "\f", "n": "\n", "r": "\r", "t": "\t",
                }
                if esc in mapping:
                    out.append(mapping[esc])
                    self._advance()
                elif esc == "u":
                    self._advance()
                    hex_digits = self.text[self.pos:self.pos + 4]
                    if len(hex_digits) != 4 or any(
                        c not in "0123456789abcdefABCDEF" for c in hex_digits
                    ):
                        raise self._error("invalid \\u escape")
                    out.append(chr(int(hex_digits, 16)))
                    self._advance(4)
                else:
                    raise self._error(f"unsupported escape '\\{esc}'")
                continue
            out.append(ch)
            self._advance()

    @staticmethod
    def _typed(raw: str) -> object:
        if raw == "true":
            return True
        if raw == "false":
            return False
        if raw in ("null", "~"):
            return None
        if _INT_RE.match(raw):
            return int(raw)
        if _FLOAT_RE.match(raw) and any(c in raw for c in ".eE"):
            return float(raw)
        return raw

    def _parse_plain(self, context: str) -> object:
        """Plain scalar. Terminators depend on context; `[`/`]` are allowed
        inside flow-mapping values (see module docstring)."""
        lead = self._peek()
        if lead in _UNSUPPORTED_LEAD:
            raise self._error(_UNSUPPORTED_LEAD[lead])
        if context == _FLOW_MAP:
            stops = {",", "}", "\n"}
        elif context == _FLOW_SEQ:
            stops = {",", "]", "\n"}
        else:
            stops = {"\n"}
        out: list[str] = []
        while not self._at_eof():
            ch = self._peek()
            if ch in stops:
                break
            if ch == "#" and (not out or out[-1] in (" ", "\t")):
                break
            out.append(ch)
            self._advance()
        raw = "".join(out).rstrip(" \t")
        if not raw:
            raise self._error("expected a value")
        return self._typed(raw)

    # -- flow collections ---------------------------------------------------

    def _parse_flow_map(self) -> dict:
        self._advance()  # consume '{'
        result: dict = {}
        self._skip_flow_filler()
        if self._peek() == "}":
            self._advance()
            return result
        while True:
            self._skip_flow_filler()
            key_line, key_col = self.line, self.col
            key = self._parse_flow_key("}")
            if key in result:
                raise TvlSyntaxError(f"duplicate key '{key}'", key_line, key_col)
            self._skip_flow_filler()
            value = self._parse_value(_FLOW_MAP)
            result[key] = value
            self._skip_flow_filler()
            ch = self._peek()
            if ch == ",":
                self._advance()
                continue
            if ch == "}":
                self._advance()
                return result
            if self._at_eof():
                raise self._error("unterminated flow mapping")
            raise self._error(f"expected ',' or '}}', found {ch!r}")

    def _parse_flow_seq(self) -> list:
        self._advance()  # consume '['
        result: list = []
        self._skip_flow_filler()
        if self._peek() == "]":
            self._advance()
            return result
        while True:
            self._skip_flow_filler()
            result.append(self._parse_value(_FLOW_SEQ))
            self._skip_flow_filler()
            ch = self._peek()
            if ch == ",":
                self._advance()
                continue
            if ch == "]":
                self._advance()
                return result
            if self._at_eof():
                raise self._error("unterminated flow sequence")
            raise self._error(f"expected ',' or ']', found {ch!r}")

    def _parse_flow_key(self, closer: str) -> str:
        ch = self._peek()
        if ch in ('"', "'"):
            key = self._parse_quoted()
            self._skip_flow_filler()
            if self._peek() != ":":
                raise self._error("expected ':' after key")
            self._advance()
            return key
        out: list[str] = []
        while not self._at_eof():
            ch = self._peek()
            if ch == ":":
                self._advance()
                raw = "".join(out).strip()
                if not raw:
                    raise self._error("empty mapping key")
                return raw
            if ch in (",", closer, "\n", "{", "["):
                raise self._error("expected ':' after key")
            out.append(ch)
            self._advance()
        raise self._error("expected ':' after key")

    # -- values and block structure ------------------------------------------

    def _parse_value(self, context: str) -> object:
        ch = self._peek()
        if ch == "{":
            return self._parse_flow_map()
        if ch == "[":
            return self._parse_flow_seq()
        if ch in ('"', "'"):
            return self._parse_quoted()
        return self._parse_plain(context)

    def _expect_line_end(self) -> None:
        self._skip_inline_space()
        if self._at_comment():
            self._skip_comment_to_eol()
        if self._at_eof():
            return
        if self._peek() != "\n":
            raise self._error(f"unexpected trailing content {self._peek()!r}")
        self._advance()

    def _peek_next_indent(self) -> int | None:
        """Indent of the next significant line without consuming it."""
        mark = (self.pos, self.line, self.col)
        self._skip_blank_lines()
        if self._at_eof():
            self.pos, self.line, self.col = mark
            return None
        indent = self._current_indent()
        self.pos, self.line, self.col = mark
        return indent

    def _parse_block_mapping(self, indent: int) -> dict:
        result: dict = {}
        while True:
            self._skip_blank_lines()
            if self._at_eof():
                return result
            mark = (self.pos, self.line, self.col)
            line_indent = self._current_indent()
            if line_indent < indent:
                self.pos, self.line, self.col = mark
                return result
            if line_indent > indent:
                raise self._error("unexpected indentation")
            if self._peek() == "-":
                raise self._error("sequence item where mapping key expected")
            key_line, key_col = self.line, self.col
            key = self._parse_block_key()
            if key in result:
                raise TvlSyntaxError(f"duplicate key '{key}'", key_line, key_col)
            self._skip_inline_space()
            if self._at_comment():
                self._skip_comment_to_eol()
            if self._at_eof() or self._peek() == "\n":
                if not self._at_eof():
                    self._advance()
                result[key] = self._parse_nested_block(indent)
                continue
            value = self._parse_value(_BLOCK)
            result[key] = value
            self._expect_line_end()

    def _parse_block_key(self) -> str:
        ch = self._peek()
        if ch in ('"', "'"):
            key = self._parse_quoted()
            self._skip_inline_space()
            if self._peek() != ":":
                raise self._error("expected ':' after key")
            self._advance()
        else:
            out: list[str] = []
            while not self._at_eof() and self._peek() not in (":", "\n"):
                out.append(self._peek())
                self._advance()
            if self._peek() != ":":
                raise self._error("expected ':' after key")
            self._advance()
            key = "".join(out).strip()
            if not key:
                raise self._error("empty mapping key")
        nxt = self._peek()
        if nxt not in ("", " ", "\n", "\t"):
            raise self._error("expected space after ':'")
        return key

    def _parse_nested_block(self, parent_indent: int) -> object:
        nxt = self._peek_next_indent()
        if nxt is None or nxt <= parent_indent:
            return None
        self._skip_blank_lines()
        probe = (self.pos, self.line, self.col)
        child_indent = self._current_indent()
        lead = self._peek()
        if lead == "-":
            self.pos, self.line, self.col = probe
            return self._parse_block_sequence(child_indent)
        if lead in ("{", "[", '"', "'"):
            # flow value placed on its own line under the key
            value = self._parse_value(_BLOCK)
            self._expect_line_end()
            return value
        self.pos, self.line, self.col = probe
        return self._parse_block_mapping(child_indent)

    def _parse_block_sequence(self, indent: int) -> list:
        result: list = []
        while True:
            self._skip_blank_lines()
            if self._at_eof():
                return result
            mark = (self.pos, self.line, self.col)
            line_indent = self._current_indent()
            if line_indent != indent or self._peek() != "-":
                self.pos, self.line, self.col = mark
                return result
            self._advance()  # consume '-'
            if self._peek() not in (" ", "\n", ""):
                raise self._error("expected space after '-'")
            self._skip_inline_space()
            if self._at_eof() or self._peek() == "\n" or self._at_comment():
                raise self._error("empty sequence item")
            result.append(self._parse_value(_BLOCK))
            self._expect_line_end()

    def parse_document(self) -> object:
        self._skip_blank_lines()
        if self._at_eof():
            raise self._error("empty document")
        indent = self._current_indent()
        ch = self._peek()
        if ch in ("{", "["):
            value = self._parse_value(_BLOCK)
            self._expect_line_end()
            self._skip_blank_lines()
            if not self._at_eof():
                raise self._error("content after end of document")
            return value
        if ch == "-":
            value = self._parse_block_sequence(indent)
        else:
            # rewind the indent we consumed so the mapping loop re-measures it
            self.pos -= indent
            self.col -= indent
            value = self._parse_block_mapping(indent)
        self._skip_blank_lines()
        if not self._at_eof():
            raise self._error("content after end of document")
        return value


def read_tvl_text(text: str) -> object:
    """Parse TVL source text into plain Python data."""
    return _Reader(text).parse_document()
