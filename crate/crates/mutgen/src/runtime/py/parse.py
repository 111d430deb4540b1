"""Parse checks over one or more Python sources.

Reads payload.json ({"sources": [str, ...]}) from the working directory and
prints one JSON record per source: either {"ok": true, "has_assert": bool,
"functions": [top-level function names]} or {"ok": false, "error_line": int}.
"""
import ast
import json
import sys


def main():
    with open("payload.json", "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    records = []
    for source in payload["sources"]:
        record = {}
        try:
            tree = ast.parse(source)
        except SyntaxError as exc:
            record["ok"] = False
            record["error_line"] = int(exc.lineno or 1)
        except (ValueError, RecursionError):
            # Null bytes or pathologically deep nesting: report line 1.
            record["ok"] = False
            record["error_line"] = 1
        else:
            record["ok"] = True
            record["has_assert"] = any(
                isinstance(node, ast.Assert) for node in ast.walk(tree)
            )
            record["functions"] = [
                node.name
                for node in tree.body
                if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef))
            ]
        records.append(record)
    json.dump(records, sys.stdout)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
