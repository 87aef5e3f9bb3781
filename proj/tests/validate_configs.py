"""Checks the example configs against docs/config.schema.json."""
import json
import sys
from pathlib import Path

import jsonschema

schema_path, *configs = sys.argv[1:]
validator = jsonschema.Draft202012Validator(json.loads(Path(schema_path).read_text()))
bad = 0
for path in configs:
    for err in validator.iter_errors(json.loads(Path(path).read_text())):
        print(f"{path}: {err.json_path}: {err.message}")
        bad += 1
sys.exit(1 if bad else 0)
