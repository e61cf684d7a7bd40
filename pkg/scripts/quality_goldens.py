#!/usr/bin/env python3
"""Independent oracle for the metric-space triangle quality functional.

Re-derives q = 12*sqrt(3) * (|t|_M / p_M^2) * F(p_M/3) with
F(x) = (min(x,1/x) * (2 - min(x,1/x)))^3 in 50-digit mpmath arithmetic,
sharing no code with the package, and freezes 25 golden cases (triangle,
per-corner metrics, expected q) into tests/data/quality_goldens.json.

Cases: the ideal unit equilateral (q = 1 by construction), the unit right
triangle under identity metrics, the unit equilateral under uniformly
scaled metrics (edge length 2 in metric space), and seeded random
triangles with random SPD metrics.
"""

import json
import pathlib
import random

import mpmath as mp

mp.mp.dps = 50


def edge_len(p, q, mp_a, mp_b):
    ex = mp.mpf(q[0]) - mp.mpf(p[0])
    ey = mp.mpf(q[1]) - mp.mpf(p[1])
    m00 = (mp_a[0] + mp_b[0]) / 2
    m01 = (mp_a[1] + mp_b[1]) / 2
    m11 = (mp_a[2] + mp_b[2]) / 2
    return mp.sqrt(m00 * ex * ex + 2 * m01 * ex * ey + m11 * ey * ey)


def quality_ref(p0, p1, p2, m0, m1, m2):
    m0 = [mp.mpf(v) for v in m0]
    m1 = [mp.mpf(v) for v in m1]
    m2 = [mp.mpf(v) for v in m2]
    area2 = ((mp.mpf(p1[0]) - mp.mpf(p0[0])) * (mp.mpf(p2[1]) - mp.mpf(p0[1]))
             - (mp.mpf(p2[0]) - mp.mpf(p0[0])) * (mp.mpf(p1[1]) - mp.mpf(p0[1])))
    assert area2 > 0
    a00 = (m0[0] + m1[0] + m2[0]) / 3
    a01 = (m0[1] + m1[1] + m2[1]) / 3
    a11 = (m0[2] + m1[2] + m2[2]) / 3
    det = a00 * a11 - a01 * a01
    area_m = mp.sqrt(det) * area2 / 2
    p_m = (edge_len(p0, p1, m0, m1) + edge_len(p1, p2, m1, m2)
           + edge_len(p2, p0, m2, m0))
    x = p_m / 3
    f = min(x, 1 / x)
    big_f = (f * (2 - f)) ** 3
    q = 12 * mp.sqrt(3) * area_m / (p_m * p_m) * big_f
    return min(max(q, mp.mpf(0)), mp.mpf(1))


def random_spd(rng):
    # M = R diag(l1,l2) R^T with moderate anisotropy
    th = rng.uniform(0, 3.14159)
    l1 = 10 ** rng.uniform(-1, 2)
    l2 = 10 ** rng.uniform(-1, 2)
    c, s = mp.cos(mp.mpf(th)), mp.sin(mp.mpf(th))
    m00 = l1 * c * c + l2 * s * s
    m01 = (l1 - l2) * c * s
    m11 = l1 * s * s + l2 * c * c
    return [float(m00), float(m01), float(m11)]


def random_ccw_triangle(rng):
    while True:
        pts = [(rng.uniform(-1, 1), rng.uniform(-1, 1)) for _ in range(3)]
        (x0, y0), (x1, y1), (x2, y2) = pts
        area2 = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area2 > 0.05:
            return pts


def main():
    ident = [1.0, 0.0, 1.0]
    eq = [(0.0, 0.0), (1.0, 0.0), (0.5, float(mp.sqrt(3) / 2))]
    cases = [
        {"p": eq, "m": [ident] * 3, "label": "ideal"},
        {"p": [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], "m": [ident] * 3,
         "label": "unit-right"},
        {"p": eq, "m": [[4.0, 0.0, 4.0]] * 3, "label": "scaled-x2"},
    ]
    rng = random.Random(20240817)
    while len(cases) < 25:
        p = random_ccw_triangle(rng)
        m = [random_spd(rng) for _ in range(3)]
        cases.append({"p": p, "m": m, "label": f"random-{len(cases)}"})
    for case in cases:
        q = quality_ref(case["p"][0], case["p"][1], case["p"][2],
                        case["m"][0], case["m"][1], case["m"][2])
        case["q"] = float(mp.nstr(q, 17))
    out = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data" / "quality_goldens.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(cases, indent=1) + "\n")
    print(f"wrote {len(cases)} cases to {out}")
    for case in cases[:3]:
        print(f"  {case['label']}: q = {case['q']!r}")


if __name__ == "__main__":
    main()
