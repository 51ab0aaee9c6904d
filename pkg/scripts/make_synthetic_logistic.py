"""Regenerate the bundled synthetic logistic-regression dataset.

50 rows, 4 standard-normal features, labels drawn from a logistic model with
fixed coefficients. The output is committed, so this only needs to run if the
file is lost.
"""

import csv
from pathlib import Path

import numpy as np

SEED = 20240615
N_ROWS = 50
COEF = np.array([1.5, -1.0, 0.5, 0.0])

OUT = Path(__file__).resolve().parents[1] / "src" / "crais" / "data" / "synthetic_logistic.csv"


def main():
    rng = np.random.default_rng(SEED)
    x = rng.standard_normal((N_ROWS, COEF.size))
    p = 1.0 / (1.0 + np.exp(-(x @ COEF)))
    y = (rng.random(N_ROWS) < p).astype(int)
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with OUT.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(COEF.size)] + ["y"])
        for row, label in zip(x, y):
            w.writerow([f"{v:.6f}" for v in row] + [label])
    print(f"wrote {N_ROWS} rows to {OUT}")


if __name__ == "__main__":
    main()
