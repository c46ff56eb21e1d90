"""Regenerates adf_reference.json with statsmodels' adfuller."""
import json
import numpy as np
from statsmodels.tsa.stattools import adfuller


def series(kind, seed, n):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n)
    if kind == "random_walk":
        return np.cumsum(e)
    if kind.startswith("ar1_"):
        phi = float(kind[4:])
        x = np.zeros(n)
        for t in range(1, n):
            x[t] = phi * x[t - 1] + e[t]
        return x
    if kind == "ar2":
        x = np.zeros(n)
        for t in range(2, n):
            x[t] = 0.5 * x[t - 1] - 0.3 * x[t - 2] + e[t]
        return x
    if kind == "ramp":
        return np.arange(n) / n + 0.01 * e
    if kind == "drift_walk":
        return np.cumsum(0.1 + e)
    raise ValueError(kind)


cases = [
    ("random_walk", 1, 300), ("random_walk", 2, 500), ("ar1_0.5", 3, 300),
    ("ar1_0.9", 4, 400), ("ar1_0.97", 5, 500), ("ar2", 6, 300),
    ("ramp", 7, 250), ("drift_walk", 8, 400), ("ar1_0.2", 9, 200),
    ("ar1_0.8", 10, 350),
]
out = []
for kind, seed, n in cases:
    x = series(kind, seed, n)
    stat, _, lag, nobs, _, _ = adfuller(x, regression="c", autolag="AIC")
    out.append({"kind": kind, "seed": seed, "statistic": stat, "lag": int(lag),
                "nobs": int(nobs), "series": [float(v) for v in x]})
with open("adf_reference.json", "w") as f:
    json.dump(out, f)
