"""Resource data notation: parser and canonical serializer.

Resource documents are UTF-8 text holding named blocks of plain data:
maps, sequences, strings, integers, floats, None, bare symbols, and
tagged values written in call form (e.g. ``re('^test::')``).  A document
is a sequence of top-level assignments::

    static_defs = {
        'model': {
            'phymod': ["fluid model", ['S','I'],
                       {'euler':0, 'nslam':1, 'nstur':2}, [CNTX_DEFV, None]],
        },
    }

``#`` starts a comment that runs to the end of the line.  Sequences are
parsed to tuples so every parsed value is hashable and usable as a map
key.  Serialization is canonical: one rendering per value, so equal
documents serialize to equal text.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterator


class NotationError(ValueError):
    """Malformed resource text; carries line/column of the offending token."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Symbol:
    """A bare identifier appearing as a value (e.g. CNTX_DEFV)."""

    name: str

    def __repr__(self):
        return self.name


@dataclass(frozen=True)
class Tagged:
    """A call-form value ``tag(arg)``, e.g. re('^ab$') or KERN_DEFV(2)."""

    tag: str
    arg: Any

    def __repr__(self):
        return f"{self.tag}({dumps_value(self.arg)})"


_PUNCT = {"[", "]", "{", "}", "(", ")", ",", ":", "=", "."}


@dataclass
class Token:
    kind: str  # 'punct' | 'ident' | 'number' | 'string' | 'end'
    text: str
    value: Any
    line: int
    column: int


def tokenize(text: str) -> list["Token"]:
    """Token stream for one chunk of notation or script text."""
    return list(_tokenize(text))


def _tokenize(text: str) -> Iterator[Token]:
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if ch in _PUNCT and not (ch == "." and _looks_numeric(text, i)):
            yield Token("punct", ch, ch, start_line, start_col)
            i += 1
            col += 1
            continue
        if ch in "'\"":
            quote = ch
            if text.startswith(quote * 3, i):
                end = text.find(quote * 3, i + 3)
                if end < 0:
                    raise NotationError("unterminated string", start_line, start_col)
                raw = text[i + 3 : end]
                consumed = end + 3 - i
            else:
                j = i + 1
                buf = []
                while True:
                    if j >= n or text[j] == "\n":
                        raise NotationError("unterminated string", start_line, start_col)
                    if text[j] == "\\" and j + 1 < n:
                        esc = text[j + 1]
                        buf.append({"n": "\n", "t": "\t", "\\": "\\", quote: quote}.get(esc, "\\" + esc))
                        j += 2
                        continue
                    if text[j] == quote:
                        break
                    buf.append(text[j])
                    j += 1
                raw = "".join(buf)
                consumed = j + 1 - i
            for c in text[i : i + consumed]:
                if c == "\n":
                    line += 1
                    col = 1
                else:
                    col += 1
            i += consumed
            yield Token("string", raw, raw, start_line, start_col)
            continue
        if ch.isdigit() or ch in "+-." and _looks_numeric(text, i):
            j = i
            if text[j] in "+-":
                j += 1
            while j < n and (text[j].isdigit() or text[j] in ".eE"):
                if text[j] in "eE" and j + 1 < n and text[j + 1] in "+-":
                    j += 2
                else:
                    j += 1
            lit = text[i:j]
            try:
                value: Any = int(lit)
            except ValueError:
                try:
                    value = float(lit)
                except ValueError:
                    raise NotationError(f"bad number literal {lit!r}", start_line, start_col) from None
            col += j - i
            i = j
            yield Token("number", lit, value, start_line, start_col)
            continue
        if ch.isalpha() or ch == "_":
            # '@' continues an identifier: copy-derived names embed it.
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_@"):
                j += 1
            word = text[i:j]
            col += j - i
            i = j
            yield Token("ident", word, word, start_line, start_col)
            continue
        raise NotationError(f"unexpected character {ch!r}", start_line, start_col)
    yield Token("end", "", None, line, col)


def _looks_numeric(text: str, i: int) -> bool:
    ch = text[i]
    if ch.isdigit():
        return True
    return ch in "+-." and i + 1 < len(text) and (text[i + 1].isdigit() or text[i + 1] == ".")


class _Parser:
    def __init__(self, text: str):
        self._tokens = list(_tokenize(text))
        self._pos = 0

    def _peek(self) -> Token:
        return self._tokens[self._pos]

    def _next(self) -> Token:
        tok = self._tokens[self._pos]
        self._pos += 1
        return tok

    def _expect(self, text: str) -> Token:
        tok = self._next()
        if tok.kind == "end" or tok.text != text:
            raise NotationError(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok.line, tok.column)
        return tok

    def document(self) -> dict:
        doc: dict[str, Any] = {}
        while self._peek().kind != "end":
            name_tok = self._next()
            if name_tok.kind != "ident":
                raise NotationError(
                    f"expected a block name, found {name_tok.text!r}", name_tok.line, name_tok.column
                )
            self._expect("=")
            if name_tok.text in doc:
                raise NotationError(f"duplicate block {name_tok.text!r}", name_tok.line, name_tok.column)
            doc[name_tok.text] = self.value()
        return doc

    def value(self) -> Any:
        tok = self._next()
        if tok.kind in ("string", "number"):
            return tok.value
        if tok.kind == "ident":
            if tok.text == "None":
                return None
            if tok.text == "True":
                return True
            if tok.text == "False":
                return False
            if self._peek().text == "(":
                self._next()
                arg = self.value()
                self._expect(")")
                return Tagged(tok.text, arg)
            return Symbol(tok.text)
        if tok.text == "[":
            items = []
            while self._peek().text != "]":
                items.append(self.value())
                if self._peek().text == ",":
                    self._next()
                elif self._peek().text != "]":
                    bad = self._peek()
                    raise NotationError(f"expected ',' or ']', found {bad.text!r}", bad.line, bad.column)
            self._next()
            return tuple(items)
        if tok.text == "{":
            entries: dict[Any, Any] = {}
            while self._peek().text != "}":
                key = self.value()
                self._expect(":")
                val = self.value()
                if key in entries:
                    raise NotationError(f"duplicate map key {key!r}", tok.line, tok.column)
                entries[key] = val
                if self._peek().text == ",":
                    self._next()
                elif self._peek().text != "}":
                    bad = self._peek()
                    raise NotationError(f"expected ',' or '}}', found {bad.text!r}", bad.line, bad.column)
            self._next()
            return entries
        raise NotationError(f"unexpected token {tok.text or 'end of input'!r}", tok.line, tok.column)


def parse_document(text: str) -> dict:
    """Parse a full resource document into {block-name: value}."""
    return _Parser(text).document()


def parse_value(text: str) -> Any:
    """Parse a single value (no block name)."""
    parser = _Parser(text)
    value = parser.value()
    trailing = parser._peek()
    if trailing.kind != "end":
        raise NotationError(f"trailing content {trailing.text!r}", trailing.line, trailing.column)
    return value


def dumps_value(value: Any) -> str:
    """Canonical single-line rendering of one value."""
    if value is None:
        return "None"
    if value is True:
        return "True"
    if value is False:
        return "False"
    if isinstance(value, (Symbol, Tagged)):
        return repr(value)
    if isinstance(value, str):
        return "'" + value.replace("\\", "\\\\").replace("'", "\\'").replace("\n", "\\n") + "'"
    if isinstance(value, bool):
        return repr(value)
    if isinstance(value, int):
        return repr(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(dumps_value(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{dumps_value(k)}: {dumps_value(v)}" for k, v in value.items()) + "}"
    raise TypeError(f"value {value!r} has no notation rendering")


def dumps_document(doc: dict) -> str:
    """Canonical rendering of a document, one block per line."""
    return "".join(f"{name} = {dumps_value(value)}\n" for name, value in doc.items())
