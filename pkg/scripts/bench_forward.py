#!/usr/bin/env python3
"""Time single-image inference across the sensor-native input sizes.

The network never resizes, so larger scans cost more trunk compute while the
gram head stays fixed; this script shows that scaling directly.
"""
import argparse
import time

import numpy as np

from gramnet.model import build, forward
from gramnet.tensor import Tensor

SIZES = [(312, 372), (355, 391), (640, 480), (352, 384),
         (1000, 1000), (800, 750), (252, 324), (500, 500)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    net = build(args.seed)
    rng = np.random.default_rng(args.seed)
    print(f"{'size':>12} {'ms/image':>10}")
    for h, w in SIZES:
        x = Tensor(rng.random((1, 1, h, w), dtype=np.float32))
        forward(net, x)  # warm
        t0 = time.perf_counter()
        for _ in range(args.repeats):
            forward(net, x)
        dt = (time.perf_counter() - t0) / args.repeats
        print(f"{h:>5}x{w:<6} {dt * 1e3:>10.1f}")


if __name__ == "__main__":
    main()
