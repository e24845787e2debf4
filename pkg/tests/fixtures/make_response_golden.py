"""Regenerate response_golden.json.

C(k) is integrated over the lens with scipy's adaptive dblquad on the full
cos(theta) range, using the explicit projector-trace integrand. This route
shares no quadrature code with the package's tensor Gauss rules.

    python3 tests/fixtures/make_response_golden.py
"""
import json
import math
from pathlib import Path

import numpy as np
from scipy.integrate import dblquad

from thermal_bdf.response import lens_integrand_traces

PAIRS = [(1.0, 1.0), (2.0, 1.0), (1.0, 2.0)]
FRACTIONS = [0.0, 0.05, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9, 0.97]


def golden_C(k, beta, lam):
    eps2 = 4.0 * lam * lam - k * k

    def f(p, c):
        sn = math.sqrt(max(0.0, 1.0 - c * c))
        pv = np.array([p * sn, 0.0, p * c])
        kv = np.array([0.0, 0.0, k])
        return p * p * float(lens_integrand_traces(pv, kv, beta))

    def pmax(c):
        return 0.5 * (-k * abs(c) + math.sqrt(k * k * c * c + eps2))

    val, err = dblquad(f, -1.0, 1.0, 0.0, pmax, epsabs=1e-14, epsrel=1e-12)
    return 2.0 * math.pi * val / math.pi**2, 2.0 * math.pi * err / math.pi**2


def main():
    out = []
    for beta, lam in PAIRS:
        for frac in FRACTIONS:
            k = 2.0 * lam * frac
            c, err = golden_C(k, beta, lam)
            out.append({"beta": beta, "lam": lam, "k": k, "C": c, "abs_err": err})
            print(beta, lam, k, c, err)
    path = Path(__file__).with_name("response_golden.json")
    path.write_text(json.dumps(out, indent=1) + "\n")


if __name__ == "__main__":
    main()
