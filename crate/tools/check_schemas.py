#!/usr/bin/env python3
# Copyright 2026 The mpenc-rs Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Validate scenarios and run reports against the JSON schemas in docs/.

Usage: python3 tools/check_schemas.py [--sim PATH] [scenario.json ...]

Each scenario is validated, then run through the simulator with
--no-timestamp and the report it prints is validated too. With no
arguments every bundled scenario is checked.
"""

import argparse
import json
import pathlib
import subprocess
import sys

import jsonschema
from referencing import Registry, Resource

ROOT = pathlib.Path(__file__).resolve().parent.parent
DOCS = ROOT / "docs"


def load_schemas():
    schemas = {}
    for name in ("scenario.schema.json", "report.schema.json"):
        schemas[name] = json.loads((DOCS / name).read_text())
    registry = Registry().with_resources(
        (name, Resource.from_contents(s)) for name, s in schemas.items()
    )
    registry = registry.with_resources(
        (s["$id"], Resource.from_contents(s)) for s in schemas.values()
    )
    make = lambda s: jsonschema.Draft202012Validator(s, registry=registry)
    return make(schemas["scenario.schema.json"]), make(schemas["report.schema.json"])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sim", default=str(ROOT / "target/debug/mpenc-sim"))
    ap.add_argument("files", nargs="*")
    args = ap.parse_args()
    files = args.files or sorted(str(p) for p in (ROOT / "crates/core/scenarios").glob("*.json"))
    scenario_v, report_v = load_schemas()
    bad = 0
    for f in files:
        errors = [e.message for e in scenario_v.iter_errors(json.loads(pathlib.Path(f).read_text()))]
        if not errors:
            run = subprocess.run([args.sim, "run", f, "--no-timestamp"], capture_output=True, text=True)
            if run.returncode == 2:
                errors.append("simulator rejected a schema-valid scenario: " + run.stderr.strip())
            else:
                errors = ["report: " + e.message for e in report_v.iter_errors(json.loads(run.stdout))]
        print(f"{'ok  ' if not errors else 'FAIL'} {f}")
        for e in errors:
            print(f"     {e}")
        bad += bool(errors)
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
