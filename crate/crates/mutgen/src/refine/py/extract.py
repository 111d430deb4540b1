"""Extract entry-point assertions from generated test code.

Reads payload.json ({"source": str, "entry": str}). Assertions are
collected in order from module-level statements and from the bodies of
top-level functions whose name starts with "test". Temporaries bound to
literals in the same scope are inlined into the assertion. Each assertion
is classified by shape:

    <entry>(...literals...) == <expr>     -> eq       (either side)
    <entry>(...literals...)               -> is_true
    not <entry>(...literals...)           -> is_false

Anything else — other comparators, non-entry calls, unresolved names,
non-literal arguments, assertions nested in loops — is skipped. Prints
{"ok": true, "assertions": [...], "skipped": int}, or {"ok": false} when
the source does not parse.
"""
import ast
import copy
import json
import sys


def is_literal(node):
    try:
        ast.literal_eval(node)
        return True
    except Exception:
        return False


class Inliner(ast.NodeTransformer):
    """Replace loads of known literal temporaries with their values."""

    def __init__(self, bindings):
        self.bindings = bindings

    def visit_Name(self, node):
        if isinstance(node.ctx, ast.Load) and node.id in self.bindings:
            return copy.deepcopy(self.bindings[node.id])
        return node


def entry_call(node, entry):
    return (
        isinstance(node, ast.Call)
        and isinstance(node.func, ast.Name)
        and node.func.id == entry
    )


def call_args_are_literal(call):
    for arg in call.args:
        if isinstance(arg, ast.Starred) or not is_literal(arg):
            return False
    for kw in call.keywords:
        if kw.arg is None or not is_literal(kw.value):
            return False
    return True


def classify(test, entry, bindings):
    test = Inliner(bindings).visit(copy.deepcopy(test))
    ast.fix_missing_locations(test)
    call = comparator = expected = None
    if (
        isinstance(test, ast.Compare)
        and len(test.ops) == 1
        and isinstance(test.ops[0], ast.Eq)
    ):
        left, right = test.left, test.comparators[0]
        if entry_call(left, entry):
            call, comparator, expected = left, "eq", right
        elif entry_call(right, entry):
            call, comparator, expected = right, "eq", left
    elif entry_call(test, entry):
        call, comparator = test, "is_true"
    elif (
        isinstance(test, ast.UnaryOp)
        and isinstance(test.op, ast.Not)
        and entry_call(test.operand, entry)
    ):
        call, comparator = test.operand, "is_false"
    if call is None or not call_args_are_literal(call):
        return None
    return {
        "call": ast.unparse(call),
        "comparator": comparator,
        "expected": ast.unparse(expected) if expected is not None else None,
    }


def main():
    with open("payload.json", "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    entry = payload["entry"]
    try:
        tree = ast.parse(payload["source"])
    except (SyntaxError, ValueError):
        json.dump({"ok": False}, sys.stdout)
        sys.stdout.write("\n")
        return

    assertions = []

    def scan(statements, bindings):
        for stmt in statements:
            if (
                isinstance(stmt, ast.Assign)
                and len(stmt.targets) == 1
                and isinstance(stmt.targets[0], ast.Name)
            ):
                if is_literal(stmt.value):
                    bindings[stmt.targets[0].id] = stmt.value
                else:
                    bindings.pop(stmt.targets[0].id, None)
            elif (
                isinstance(stmt, ast.AnnAssign)
                and isinstance(stmt.target, ast.Name)
                and stmt.value is not None
            ):
                if is_literal(stmt.value):
                    bindings[stmt.target.id] = stmt.value
                else:
                    bindings.pop(stmt.target.id, None)
            elif isinstance(stmt, ast.Assert):
                record = classify(stmt.test, entry, bindings)
                if record is not None:
                    assertions.append(record)

    module_bindings = {}
    for stmt in tree.body:
        if isinstance(stmt, ast.FunctionDef) and stmt.name.startswith("test"):
            scan(stmt.body, dict(module_bindings))
        else:
            scan([stmt], module_bindings)

    total_asserts = sum(isinstance(n, ast.Assert) for n in ast.walk(tree))
    json.dump(
        {
            "ok": True,
            "assertions": assertions,
            "skipped": total_asserts - len(assertions),
        },
        sys.stdout,
    )
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
