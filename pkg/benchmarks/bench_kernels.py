"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-N time of each backend and the
speedup, then an end-to-end LeNet image under each backend.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from olfuse import kernels

E2E = """
import time
from olfuse import kernels
from olfuse.network import bundled_network
from olfuse.planner import plan_network
from olfuse.simulator import random_images, random_weights, run_batch
net = bundled_network("lenet5"); plan = plan_network(net, 2, 1)
w = random_weights(net, 2, 8, 1); x = random_images(net, 2, 8, 2)
run_batch(net, x[:1], 8, w, plan)
t = time.perf_counter(); run_batch(net, x, 8, w, plan)
print(kernels.BACKEND, (time.perf_counter() - t) / len(x))
"""


def cases(rng):
    x = rng.integers(-1, 2, size=(20000, 8)).astype(np.int8)
    y = rng.integers(-255, 256, size=20000)
    a = rng.integers(-1, 2, size=(20000, 24)).astype(np.int8)
    b = rng.integers(-1, 2, size=(20000, 24)).astype(np.int8)
    v = rng.integers(-255, 256, size=20000)
    return {
        "mul_sp 20000x8 -> 16": lambda m: m.mul_sp(x, y, 8, 16, 2),
        "online_add 20000x24": lambda m: m.online_add(a, b, 2),
        "end_scan 20000x24": lambda m: m.end_scan(a),
        "decode_scaled 20000x24": lambda m: m.decode_scaled(a),
        "encode_binary 20000 @ 8": lambda m: m.encode_binary(v, 8),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} " + " ".join(f"{name:>12s}" for name in backends) + "   speedup")
    for label, fn in cases(rng).items():
        times = {name: min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
                 for name, mod in backends.items()}
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:28s} " + " ".join(f"{t * 1e3:10.2f}ms" for t in times.values())
              + f"   {speed:7.1f}x")
    print("\nend-to-end LeNet fused image (s/image):")
    for pure in ("0", "1"):
        env = dict(os.environ, OLFUSE_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True,
                             text=True, check=True).stdout.strip()
        print("  " + out)


if __name__ == "__main__":
    main()
