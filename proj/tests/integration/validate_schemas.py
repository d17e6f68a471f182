"""Run each JSON-emitting subcommand and validate its output against docs/*.schema.json."""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema


def run(binary, *args):
    proc = subprocess.run([binary, *args], capture_output=True, text=True, check=False)
    if proc.returncode != 0:
        sys.exit(f"{' '.join(args)} exited {proc.returncode}: {proc.stderr}")
    return proc.stdout


def main():
    binary, docs = sys.argv[1], Path(sys.argv[2])
    with tempfile.TemporaryDirectory() as tmp:
        run(binary, "simulate", "--seed", "4", "--out", tmp)
        observed = str(Path(tmp) / "observed.csv")
        outputs = {
            "describe": run(binary, "describe", "--input", observed, "--format", "json"),
            "diagnose": run(binary, "diagnose", "--input", observed, "--format", "json"),
            "analyze": run(binary, "analyze", "--input", observed, "--format", "json", "--mi-k", "5"),
            "study": run(binary, "study", "--reps", "3", "--mi-k", "3", "--format", "json"),
        }
    failures = 0
    for name, text in outputs.items():
        schema = json.loads((docs / f"{name}.schema.json").read_text())
        jsonschema.Draft202012Validator.check_schema(schema)
        validator = jsonschema.Draft202012Validator(schema, format_checker=jsonschema.FormatChecker())
        errors = list(validator.iter_errors(json.loads(text)))
        for e in errors:
            print(f"{name}: {'/'.join(map(str, e.absolute_path))}: {e.message}")
        print(f"{name}: {'ok' if not errors else 'INVALID'}")
        failures += bool(errors)
    sys.exit(1 if failures else 0)


if __name__ == "__main__":
    main()
