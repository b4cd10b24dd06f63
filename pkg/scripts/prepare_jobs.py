"""Write data/jobs.csv, a numeric encoding of the `jobs` table from the R package `mediation`.

The source table is read through the `rdatasets` Python package (not a
dependency of `mediator`; install it only to regenerate the CSV).

Float columns are rounded to 6 decimals (the source stores float32).
Encodings: ordinal income (lt15k=1 .. 50k+=5) and education (lt-hs=1 ..
gradwk=5); occupation and marital status as alphabetical codes 1..k;
nonwhite as 0/1.
"""

import argparse
import csv
from pathlib import Path

INCOME = {"lt15k": 1, "15t24k": 2, "25t39k": 3, "40t49k": 4, "50k+": 5}
EDUC = {"lt-hs": 1, "highsc": 2, "somcol": 3, "bach": 4, "gradwk": 5}
NONWHITE = {"white0": 0, "non.white1": 1}
COLUMNS = ["id", "treat", "econ_hard", "depress1", "sex", "age", "occp", "marital", "nonwhite",
           "educ", "income", "comply", "job_seek", "depress2"]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data" / "jobs.csv"))
    args = p.parse_args()

    import rdatasets

    df = rdatasets.data("mediation", "jobs")
    codes = {c: {v: i + 1 for i, v in enumerate(sorted(df[c].unique()))} for c in ("occp", "marital")}
    rows = []
    for r in df.itertuples(index=False):
        rows.append({
            "id": r.rownames,
            "treat": r.treat,
            "econ_hard": round(float(r.econ_hard), 6),
            "depress1": round(float(r.depress1), 6),
            "sex": r.sex,
            "age": round(float(r.age), 6),
            "occp": codes["occp"][r.occp],
            "marital": codes["marital"][r.marital],
            "nonwhite": NONWHITE[r.nonwhite],
            "educ": EDUC[r.educ],
            "income": INCOME[r.income],
            "comply": r.comply,
            "job_seek": round(float(r.job_seek), 6),
            "depress2": round(float(r.depress2), 6),
        })
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COLUMNS)
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
