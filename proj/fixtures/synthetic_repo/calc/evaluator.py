"""Recursive-descent evaluation of tokenized expressions."""

from .tokenizer import tokenize


class EvaluationError(ValueError):
    pass


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.index = 0

    def peek(self):
        return self.tokens[self.index]

    def advance(self):
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect(self, text):
        token = self.advance()
        if token.text != text:
            raise EvaluationError(f"expected {text!r} at {token.position}")
        return token

    def expression(self):
        value = self.term()
        while self.peek().text in ("+", "-"):
            op = self.advance().text
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self):
        value = self.factor()
        while self.peek().text in ("*", "/"):
            op = self.advance().text
            rhs = self.factor()
            if op == "*":
                value = value * rhs
            else:
                value = value // rhs
        return value

    def factor(self):
        token = self.peek()
        if token.text == "-":
            self.advance()
            return -self.factor()
        if token.text == "(":
            self.advance()
            value = self.expression()
            self.expect(")")
            return value
        if token.kind == "number":
            self.advance()
            return float(token.text)
        raise EvaluationError(f"unexpected token {token.text!r} at {token.position}")


def evaluate(source):
    parser = _Parser(tokenize(source))
    value = parser.expression()
    if parser.peek().kind != "end":
        raise EvaluationError(f"trailing input at {parser.peek().position}")
    return value
