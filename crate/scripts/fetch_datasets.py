#!/usr/bin/env python3
"""Fetch the public count datasets used by the reproduction tests.

Writes CSV files with a header row into data/ (or the directory given as the
first argument):

  affairs.csv    Fair (1978) extramarital affairs, 601 rows, from the AER
                 package's `Affairs` table. Columns:
                   affairs        count of affairs in the past year (response)
                   gender         1 = male, 0 = female
                   age
                   yearsmarried
                   children       1 = yes, 0 = no
                   religiousness  1 (anti) .. 5 (very)
                   education
                   occupation     Hollingshead classification 1..7
                   rating         self-rated marriage happiness 1..5

  fertility.csv  Winkelmann (1995) GSOEP fertility data, 1243 rows. Not on
                 any public mirror this script knows about; place a CSV with
                 columns children, german, schooling, vocational, university,
                 catholic, protestant, muslim, rural, year_birth,
                 age_marriage there by hand to enable those tests.

The `rdatasets` Python package is used when installed; otherwise the CSV is
downloaded from the Rdatasets mirror.
"""

import csv
import io
import sys
import urllib.request
from pathlib import Path

RDATASETS_URL = "https://vincentarelbundock.github.io/Rdatasets/csv/AER/Affairs.csv"

AFFAIRS_COLUMNS = [
    "affairs",
    "gender",
    "age",
    "yearsmarried",
    "children",
    "religiousness",
    "education",
    "occupation",
    "rating",
]


def affairs_rows():
    try:
        import rdatasets

        frame = rdatasets.data("AER", "Affairs")
        return frame.to_dict("records")
    except ImportError:
        with urllib.request.urlopen(RDATASETS_URL, timeout=60) as resp:
            text = resp.read().decode("utf-8")
        return list(csv.DictReader(io.StringIO(text)))


def code(value, yes):
    return 1 if str(value).strip().strip('"') == yes else 0


def write_affairs(out: Path):
    rows = affairs_rows()
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AFFAIRS_COLUMNS)
        for r in rows:
            w.writerow(
                [
                    int(float(r["affairs"])),
                    code(r["gender"], "male"),
                    r["age"],
                    r["yearsmarried"],
                    code(r["children"], "yes"),
                    int(float(r["religiousness"])),
                    int(float(r["education"])),
                    int(float(r["occupation"])),
                    int(float(r["rating"])),
                ]
            )
    print(f"wrote {out} ({len(rows)} rows)")


def main():
    dest = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data"
    dest.mkdir(parents=True, exist_ok=True)
    write_affairs(dest / "affairs.csv")
    fert = dest / "fertility.csv"
    if not fert.exists():
        print(f"{fert} not written: no public mirror for the GSOEP fertility data", file=sys.stderr)


if __name__ == "__main__":
    main()
