"""Report which of the requested modules cannot be imported here.

Reads payload.json ({"modules": [str, ...]}) and prints {"missing": [...]}.
"""
import importlib.util
import json
import sys


def main():
    with open("payload.json", "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    missing = []
    for name in payload["modules"]:
        try:
            spec = importlib.util.find_spec(name)
        except (ImportError, ValueError, ModuleNotFoundError):
            spec = None
        if spec is None:
            missing.append(name)
    json.dump({"missing": missing}, sys.stdout)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
