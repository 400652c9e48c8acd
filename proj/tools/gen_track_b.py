#!/usr/bin/env python3
"""Generates core/data/track_b.trk: a closed circuit of straights and spiral-eased
arcs with sharp alternating turns. Two straights are solved for so the loop closes."""
import math
import sys

import numpy as np

# (kind, value, radius); kind 'S' = straight length, 'T' = signed turn in degrees.
# Turns enter and leave through linear-curvature spirals of SPIRAL meters.
LAYOUT = [
    ("S", 130.0, 0.0),
    ("T", 90.0, 30.0),
    ("S", 150.0, 0.0),
    ("T", -90.0, 28.0),
    ("S", None, 0.0),     # solved
    ("T", 90.0, 28.0),
    ("S", 135.0, 0.0),
    ("T", 90.0, 30.0),
    ("S", 450.0, 0.0),
    ("T", -90.0, 28.0),
    ("S", None, 0.0),     # solved
    ("T", 90.0, 28.0),
    ("S", 520.0, 0.0),
    ("T", 90.0, 60.0),
    ("S", 575.0, 0.0),
    ("T", 90.0, 45.0),
]
SPACING = 0.5
SPIRAL = 35.0


def walk(layout, lengths):
    pts = [(0.0, 0.0)]
    state = [0.0, 0.0, 0.0]  # x, y, heading
    it = iter(lengths)

    def run(length, k0, k1, step):
        if length <= 0:
            return
        n = max(1, int(math.ceil(length / step)))
        ds = length / n
        for i in range(n):
            k = k0 + (k1 - k0) * (i + 0.5) / n
            state[2] += 0.5 * k * ds
            state[0] += math.cos(state[2]) * ds
            state[1] += math.sin(state[2]) * ds
            state[2] += 0.5 * k * ds
            pts.append((state[0], state[1]))

    for kind, val, rad in layout:
        if kind == "S":
            run(val if val is not None else next(it), 0.0, 0.0, 10.0)
        else:
            ang = math.radians(val)
            k = math.copysign(1.0 / rad, ang)
            spiral = min(SPIRAL, abs(ang) * rad)
            run(spiral, 0.0, k, SPACING)
            run(abs(ang) * rad - spiral, k, k, SPACING)
            run(spiral, k, 0.0, SPACING)
    return pts


def solve():
    base = walk(LAYOUT, [0.0, 0.0])[-1]
    e1 = np.subtract(walk(LAYOUT, [1.0, 0.0])[-1], base)
    e2 = np.subtract(walk(LAYOUT, [0.0, 1.0])[-1], base)
    a = np.column_stack([e1, e2])
    return np.linalg.solve(a, -np.asarray(base))


def main():
    lengths = solve()
    if min(lengths) <= 20:
        sys.exit(f"layout does not close with positive straights: {lengths}")
    pts = walk(LAYOUT, list(lengths))
    assert math.hypot(*pts[-1]) < 1e-6
    pts = pts[:-1]
    total = sum(math.dist(pts[i], pts[(i + 1) % len(pts)]) for i in range(len(pts)))
    print(f"solved straights {lengths}, total {total:.1f} m, {len(pts)} points", file=sys.stderr)
    out = sys.argv[1] if len(sys.argv) > 1 else "core/data/track_b.trk"
    with open(out, "w") as f:
        f.write("name B\nhalf_width 6\n")
        for x, y in pts:
            f.write(f"{x:.4f} {y:.4f}\n")


if __name__ == "__main__":
    main()
