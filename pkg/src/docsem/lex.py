"""Tokenizer shared by the document, expression, and trace parsers."""

from __future__ import annotations

from dataclasses import dataclass

from .diagnostics import Diagnostic, ParseError

# Longest-match first.
_SYMBOLS = [
    "->", "==", "!=", "<=", ">=", "&&", "||", "=>", "..",
    "{", "}", "(", ")", "[", "]", ":", ";", ",", ".", "'",
    "=", "<", ">", "!", "+", "-", "*", "|",
]

EOF = "<eof>"


@dataclass(frozen=True)
class Token:
    kind: str  # "ident", "int", a symbol string, or EOF
    text: str
    line: int
    col: int
    offset: int


def _is_ident_start(ch: str) -> bool:
    return ch.isalpha() or ch == "_"


def _is_ident_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def tokenize(text: str, source: str | None = None) -> list[Token]:
    """Split ``text`` into tokens; comments run from ``//`` to end of line."""
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if ch.isspace():
            i, col = i + 1, col + 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        if _is_ident_start(ch):
            j = i
            while j < n and _is_ident_char(text[j]):
                j += 1
            tokens.append(Token("ident", text[i:j], line, col, i))
            col += j - i
            i = j
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(Token("int", text[i:j], line, col, i))
            col += j - i
            i = j
            continue
        for sym in _SYMBOLS:
            if text.startswith(sym, i):
                tokens.append(Token(sym, sym, line, col, i))
                col += len(sym)
                i += len(sym)
                break
        else:
            raise ParseError([Diagnostic(f"unexpected character {ch!r}", line, col, source)])
    tokens.append(Token(EOF, "", line, col, i))
    return tokens


class TokenStream:
    """Cursor over a token list with the usual expect/accept helpers."""

    def __init__(self, tokens: list[Token], source: str | None = None, text: str = ""):
        self.tokens = tokens
        self.pos = 0
        self.source = source
        self.text = text

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        if tok.kind != EOF:
            self.pos += 1
        return tok

    def at(self, kind: str, text: str | None = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (text is None or tok.text == text)

    def at_keyword(self, word: str) -> bool:
        return self.at("ident", word)

    def accept(self, kind: str, text: str | None = None) -> Token | None:
        if self.at(kind, text):
            return self.next()
        return None

    def expect(self, kind: str, text: str | None = None) -> Token:
        tok = self.peek()
        if not self.at(kind, text):
            want = text or kind
            raise self.error(f"expected {want!r}, found {tok.text or tok.kind!r}")
        return self.next()

    def expect_keyword(self, word: str) -> Token:
        return self.expect("ident", word)

    def ident(self) -> str:
        return self.expect("ident").text

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.peek()
        return ParseError([Diagnostic(message, tok.line, tok.col, self.source)])

    def at_eof(self) -> bool:
        return self.peek().kind == EOF


def stream(text: str, source: str | None = None) -> TokenStream:
    return TokenStream(tokenize(text, source), source, text)
