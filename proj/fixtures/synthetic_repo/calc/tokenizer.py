"""Split an arithmetic expression into tokens."""

from dataclasses import dataclass

OPERATORS = "+-*/()"


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    position: int


class TokenizeError(ValueError):
    pass


def _read_number(source, start):
    end = start
    seen_dot = False
    while end < len(source):
        ch = source[end]
        if ch.isdigit():
            end += 1
        elif ch == "." and not seen_dot:
            seen_dot = True
            end += 1
        else:
            break
    return source[start:end], end


def tokenize(source):
    tokens = []
    i = 0
    while i < len(source):
        ch = source[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or ch == ".":
            text, end = _read_number(source, i)
            tokens.append(Token("number", text, i))
            i = end
            continue
        if ch in OPERATORS:
            tokens.append(Token("op", ch, i))
            i += 1
            continue
        raise TokenizeError(f"unexpected character {ch!r} at {i}")
    tokens.append(Token("end", "", len(source)))
    return tokens
