#!/usr/bin/env python3
"""Download the two UCI benchmark files used by the real-data acceptance tests.

Writes, under the target directory (default: <repo>/data):
  qsar_aquatic_toxicity.csv   546 rows, 9 semicolon-separated columns
  airfoil_self_noise.dat      1503 rows, 6 tab-separated columns

Requires network access to archive.ics.uci.edu. Usage:
  python3 scripts/fetch_data.py [target_dir]
"""

import io
import pathlib
import sys
import urllib.request
import zipfile

SOURCES = {
    "qsar_aquatic_toxicity.csv": (
        "https://archive.ics.uci.edu/static/public/505/qsar+aquatic+toxicity.zip",
        "qsar_aquatic_toxicity.csv",
    ),
    "airfoil_self_noise.dat": (
        "https://archive.ics.uci.edu/static/public/291/airfoil+self+noise.zip",
        "airfoil_self_noise.dat",
    ),
}

EXPECTED_ROWS = {"qsar_aquatic_toxicity.csv": 546, "airfoil_self_noise.dat": 1503}


def fetch(target_dir: pathlib.Path) -> int:
    target_dir.mkdir(parents=True, exist_ok=True)
    for out_name, (url, member) in SOURCES.items():
        out_path = target_dir / out_name
        if out_path.exists():
            print(f"{out_path} already present, skipping")
            continue
        print(f"downloading {url}")
        with urllib.request.urlopen(url) as response:
            blob = response.read()
        with zipfile.ZipFile(io.BytesIO(blob)) as archive:
            names = archive.namelist()
            source = member if member in names else names[0]
            data = archive.read(source)
        out_path.write_bytes(data)
        rows = sum(1 for line in data.splitlines() if line.strip())
        print(f"wrote {out_path} ({rows} rows, expected {EXPECTED_ROWS[out_name]})")
        if rows != EXPECTED_ROWS[out_name]:
            print("warning: unexpected row count; check the source file", file=sys.stderr)
    return 0


if __name__ == "__main__":
    default = pathlib.Path(__file__).resolve().parent.parent / "data"
    sys.exit(fetch(pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else default))
