#!/usr/bin/env python3
"""Independent high-precision evaluator for the synthetic benchmark field.

Computes reference values of

    psi(x, y, t) = 0.1*sin(50x + 2*pi*t/T) + atan2(-0.1, 2x - sin(5y + 2*pi*t/T))

with 50-digit mpmath arithmetic, bypassing the package entirely. The
printed values are frozen into tests/test_metric.py.
"""

import mpmath as mp

mp.mp.dps = 50


def psi_ref(x, y, t, period):
    x, y, t, period = map(mp.mpf, (x, y, t, period))
    phase = 2 * mp.pi * t / period
    den = 2 * x - mp.sin(5 * y + phase)
    return mp.mpf("0.1") * mp.sin(50 * x + phase) + mp.atan2(mp.mpf("-0.1"), den)


CASES = [
    (0.25, 0.25, 0.0, 1.0),
    (0.5, 0.1, 0.0, 1.0),
    (0.1, 0.9, 12.5, 50.0),
    (0.47, 0.52, 3.0, 50.0),  # near the front: den close to 0
]

if __name__ == "__main__":
    for x, y, t, period in CASES:
        v = psi_ref(x, y, t, period)
        print(f"psi({x}, {y}, t={t}, T={period}) = {mp.nstr(v, 20)}")
