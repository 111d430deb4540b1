"""Evaluate one call expression against the program under test.

Reads payload.json ({"call": str, "timeout_secs": int, "check": {...}}) and
program.py from the working directory, executes the program module, then
evaluates the call. Prints a single JSON record describing the outcome.

The value is reported through its repr only when that repr round-trips via
ast.literal_eval back to an equal value; anything else is "non_literal".
The optional check compares against an expected literal ("equals") or
reports truthiness ("truthy") using native Python semantics, so 4 == 4.0
holds while "4" == 4 does not.
"""
import ast
import json
import signal
import sys


class _Timeout(Exception):
    pass


def _alarm(signum, frame):
    raise _Timeout()


def _describe(exc):
    text = str(exc)
    name = type(exc).__name__
    return f"{name}: {text}" if text else name


def emit(record):
    json.dump(record, sys.stdout)
    sys.stdout.write("\n")


def main():
    with open("payload.json", "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    with open("program.py", "r", encoding="utf-8") as fh:
        source = fh.read()

    try:
        ast.parse(payload["call"], mode="eval")
    except (SyntaxError, ValueError):
        emit({"status": "bad_call"})
        return

    namespace = {}
    try:
        exec(compile(source, "program.py", "exec"), namespace)
    except BaseException as exc:  # report, never crash the driver
        emit({"status": "runtime_error", "detail": _describe(exc)})
        return

    signal.signal(signal.SIGALRM, _alarm)
    signal.alarm(max(1, int(payload.get("timeout_secs", 5))))
    try:
        value = eval(payload["call"], namespace)
        signal.alarm(0)
    except _Timeout:
        emit({"status": "timeout"})
        return
    except TypeError as exc:
        signal.alarm(0)
        emit({"status": "type_failure", "detail": _describe(exc)})
        return
    except BaseException as exc:
        signal.alarm(0)
        emit({"status": "runtime_error", "detail": _describe(exc)})
        return

    literal = repr(value)
    try:
        round_trip = ast.literal_eval(literal) == value
    except Exception:
        round_trip = False
    if not round_trip:
        emit({"status": "non_literal", "detail": type(value).__name__})
        return

    record = {"status": "value", "literal": literal}
    check = payload.get("check") or {"kind": "none"}
    if check["kind"] == "equals":
        try:
            expected = ast.literal_eval(check["expected"])
            record["equals_expected"] = bool(expected == value)
        except Exception:
            record["equals_expected"] = False
    elif check["kind"] == "truthy":
        record["truthy"] = bool(value)
    emit(record)


if __name__ == "__main__":
    main()
