"""Scan a Python module for mutation sites.

Reads payload.json ({"source": str}) and prints {"ok": true, "sites": [...]}
where each site is {"op": str, "line": int, "col": int, "edits": [{"start":
int, "end": int, "text": str}]}. Edit offsets are byte offsets into the
UTF-8 encoded source; line is 1-based and col is the byte column, matching
the CPython AST convention. A source that does not parse yields
{"ok": false}.

One site produces exactly one mutant. The swap tables follow the classic
MutPy behavior for each operator class.
"""
import ast
import bisect
import json
import sys

# token -> replacement per AST operator class (shared by AOR and ASR)
BIN_SWAP = {
    ast.Add: ("+", "-"),
    ast.Sub: ("-", "+"),
    ast.Mult: ("*", "/"),
    ast.Div: ("/", "*"),
    ast.FloorDiv: ("//", "/"),
    ast.Mod: ("%", "*"),
    ast.Pow: ("**", "*"),
}
REL_SWAP = {
    ast.Lt: ("<", ">"),
    ast.Gt: (">", "<"),
    ast.LtE: ("<=", ">="),
    ast.GtE: (">=", "<="),
    ast.Eq: ("==", "!="),
    ast.NotEq: ("!=", "=="),
}
# test expressions that bind looser than `not` and need their own parens
PAREN_WRAP = (ast.BoolOp, ast.IfExp, ast.Lambda, ast.NamedExpr)


class Scanner:
    def __init__(self, source):
        self.data = source.encode("utf-8")
        self.sites = []
        self.line_starts = []
        offset = 0
        for line in source.split("\n"):
            self.line_starts.append(offset)
            offset += len(line.encode("utf-8")) + 1

    def abs_pos(self, lineno, col):
        return self.line_starts[lineno - 1] + col

    def line_col(self, offset):
        idx = bisect.bisect_right(self.line_starts, offset) - 1
        return idx + 1, offset - self.line_starts[idx]

    def span(self, node):
        return (
            self.abs_pos(node.lineno, node.col_offset),
            self.abs_pos(node.end_lineno, node.end_col_offset),
        )

    def find_token(self, start, end, token):
        """First occurrence of token in [start, end), skipping comments.

        The gap between two operand spans contains only the operator token,
        whitespace, parentheses, comments, and line continuations, so a
        comment-aware scan is unambiguous. Word tokens (and/or) must sit on
        identifier boundaries.
        """
        data = self.data
        tok = token.encode("utf-8")
        word = tok.isalpha()
        i = start
        while i + len(tok) <= end:
            if data[i:i + 1] == b"#":
                while i < end and data[i:i + 1] != b"\n":
                    i += 1
                continue
            if data[i:i + len(tok)] == tok:
                if word:
                    before = data[i - 1:i]
                    after = data[i + len(tok):i + len(tok) + 1]
                    if (
                        before.isalnum() or before == b"_"
                        or after.isalnum() or after == b"_"
                    ):
                        i += 1
                        continue
                return i
            i += 1
        return None

    def ws_end(self, start):
        i = start
        while i < len(self.data) and self.data[i:i + 1] in (b" ", b"\t"):
            i += 1
        return i

    def add(self, op, at, edits):
        line, col = self.line_col(at)
        self.sites.append({"op": op, "line": line, "col": col, "edits": edits})

    def token_swap(self, op, gap_start, gap_end, token, replacement):
        at = self.find_token(gap_start, gap_end, token)
        if at is not None:
            self.add(op, at, [
                {"start": at, "end": at + len(token), "text": replacement},
            ])

    def scan(self, tree):
        for node in ast.walk(tree):
            if isinstance(node, ast.BinOp) and type(node.op) in BIN_SWAP:
                token, replacement = BIN_SWAP[type(node.op)]
                self.token_swap(
                    "AOR",
                    self.span(node.left)[1],
                    self.span(node.right)[0],
                    token,
                    replacement,
                )
            elif isinstance(node, ast.AugAssign) and type(node.op) in BIN_SWAP:
                token, replacement = BIN_SWAP[type(node.op)]
                self.token_swap(
                    "ASR",
                    self.span(node.target)[1],
                    self.span(node.value)[0],
                    token + "=",
                    replacement + "=",
                )
            elif isinstance(node, ast.Compare):
                left = node.left
                for op, comparator in zip(node.ops, node.comparators):
                    if type(op) in REL_SWAP:
                        token, replacement = REL_SWAP[type(op)]
                        self.token_swap(
                            "ROR",
                            self.span(left)[1],
                            self.span(comparator)[0],
                            token,
                            replacement,
                        )
                    left = comparator
            elif isinstance(node, ast.BoolOp):
                # One site per BoolOp node: the AST stores a single op for
                # the whole chain, so every connector token flips together.
                if isinstance(node.op, ast.And):
                    token, replacement = "and", "or"
                else:
                    token, replacement = "or", "and"
                edits = []
                for a, b in zip(node.values, node.values[1:]):
                    at = self.find_token(self.span(a)[1], self.span(b)[0], token)
                    if at is None:
                        edits = None
                        break
                    edits.append(
                        {"start": at, "end": at + len(token), "text": replacement}
                    )
                if edits:
                    self.add("LCR", edits[0]["start"], edits)
            elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
                start, _ = self.span(node)
                token = b"+" if isinstance(node.op, ast.UAdd) else b"-"
                if self.data[start:start + 1] == token:
                    self.add("AOD", start, [
                        {"start": start, "end": self.ws_end(start + 1), "text": ""},
                    ])
            elif isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.Not):
                start, _ = self.span(node)
                if self.data[start:start + 3] == b"not":
                    self.add("COD", start, [
                        {"start": start, "end": self.ws_end(start + 3), "text": ""},
                    ])
            elif isinstance(node, (ast.Break, ast.Continue)):
                start, end = self.span(node)
                text = "continue" if isinstance(node, ast.Break) else "break"
                self.add("BCR", start, [
                    {"start": start, "end": end, "text": text},
                ])
            elif isinstance(node, (ast.If, ast.While)):
                start, end = self.span(node.test)
                if isinstance(node.test, PAREN_WRAP):
                    head, tail = "(not (", "))"
                else:
                    head, tail = "(not ", ")"
                self.add("COI", start, [
                    {"start": start, "end": start, "text": head},
                    {"start": end, "end": end, "text": tail},
                ])
            elif isinstance(node, ast.ExceptHandler):
                first, last = node.body[0], node.body[-1]
                body_start = self.abs_pos(first.lineno, first.col_offset)
                body_end = self.abs_pos(last.end_lineno, last.end_col_offset)
                bare_raise = (
                    len(node.body) == 1
                    and isinstance(first, ast.Raise)
                    and first.exc is None
                    and first.cause is None
                )
                just_pass = len(node.body) == 1 and isinstance(first, ast.Pass)
                if not bare_raise:
                    self.add("EHD", body_start, [
                        {"start": body_start, "end": body_end, "text": "raise"},
                    ])
                if not just_pass:
                    self.add("EXS", body_start, [
                        {"start": body_start, "end": body_end, "text": "pass"},
                    ])
            elif isinstance(node, ast.Slice):
                if node.lower is not None or node.upper is not None or node.step is not None:
                    start, end = self.span(node)
                    self.add("SIR", start, [
                        {"start": start, "end": end, "text": ":"},
                    ])


def main():
    with open("payload.json", "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    source = payload["source"]
    try:
        tree = ast.parse(source)
    except (SyntaxError, ValueError):
        json.dump({"ok": False}, sys.stdout)
        sys.stdout.write("\n")
        return
    scanner = Scanner(source)
    scanner.scan(tree)
    json.dump({"ok": True, "sites": scanner.sites}, sys.stdout)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
