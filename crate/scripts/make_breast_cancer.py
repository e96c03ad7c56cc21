#!/usr/bin/env python3
"""Regenerate data/breast-cancer.csv from the copy of the Wisconsin
diagnostic data set that ships with scikit-learn (569 rows, 30 features).

Column names follow the UCI "<measure>-<statistic>" naming.
"""
import csv
import os
import sys

import sklearn

MEASURES = ["radius", "texture", "perimeter", "area", "smoothness", "compactness",
            "concavity", "concave points", "symmetry", "fractal dimension"]
STATS = ["mean", "se", "worst"]


def main(path):
    src = os.path.join(os.path.dirname(sklearn.__file__), "datasets", "data", "breast_cancer.csv")
    names = [f"{m}-{s}" for s in STATS for m in MEASURES]
    with open(src) as fh, open(path, "w", newline="") as out:
        rows = list(csv.reader(fh))[1:]
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(names + ["diagnosis"])
        for row in rows:
            # sklearn encodes 0 = malignant, 1 = benign
            writer.writerow(row[:30] + ["M" if row[30] == "0" else "B"])
    print(len(rows))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/breast-cancer.csv")
