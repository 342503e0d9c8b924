"""Benchmark the match-length kernel: compiled extension vs pure Python.

The match-length scan behind the entropy estimator is the one scalar
inner loop in the pipeline; everything else is vectorized. Run:

    python benchmarks/bench_entropy.py

Each workload is timed under both kernels in separate interpreter
processes (the kernel is chosen at import time).
"""

from __future__ import annotations

import json
import subprocess
import sys

WORKLOADS = [
    ("population 2000 users, n=720, alphabet 30", "population", {}),
    ("single constant sequence, n=10000", "single", {"kind": "constant", "n": 10_000}),
    ("single alternating sequence, n=10000", "single", {"kind": "alternating", "n": 10_000}),
    ("single iid-4 sequence, n=100000", "single", {"kind": "iid", "n": 100_000, "sigma": 4}),
    ("single iid-200 sequence, n=100000", "single", {"kind": "iid", "n": 100_000, "sigma": 200}),
]

WORKER = r"""
import json, sys, time
import numpy as np
from gridmob import entropy

payload = json.loads(sys.argv[1])
rng = np.random.default_rng(0)

def make_sequence(kind, n, sigma=4):
    if kind == "constant":
        return np.zeros(n, dtype=np.int64)
    if kind == "alternating":
        return np.tile(np.array([0, 1], dtype=np.int64), n // 2)
    return rng.integers(0, sigma, n)

t0 = time.perf_counter()
if payload["mode"] == "population":
    total = 0
    for _ in range(2000):
        seq = rng.integers(0, 30, 720)
        total += int(entropy.lz_match_lengths(seq).sum())
else:
    seq = make_sequence(**payload["args"])
    total = int(entropy.lz_match_lengths(seq).sum())
elapsed = time.perf_counter() - t0
print(json.dumps({"kernel": entropy.KERNEL, "seconds": elapsed, "checksum": total}))
"""


def run_workload(mode: str, args: dict, pure: bool) -> dict:
    payload = json.dumps({"mode": mode, "args": args})
    env = {"GRIDMOB_PURE_PYTHON": "1"} if pure else {}
    import os

    result = subprocess.run(
        [sys.executable, "-c", WORKER, payload],
        capture_output=True,
        text=True,
        env={**os.environ, **env},
        check=True,
    )
    return json.loads(result.stdout)


def main() -> None:
    rows = []
    for label, mode, args in WORKLOADS:
        compiled = run_workload(mode, args, pure=False)
        fallback = run_workload(mode, args, pure=True)
        if compiled["checksum"] != fallback["checksum"]:
            raise SystemExit(f"kernel outputs differ on: {label}")
        rows.append((label, compiled, fallback))
    width = max(len(r[0]) for r in rows)
    print(f"{'workload':<{width}}  {'compiled':>10}  {'python':>10}  {'speedup':>8}")
    for label, compiled, fallback in rows:
        speed = fallback["seconds"] / compiled["seconds"]
        print(
            f"{label:<{width}}  {compiled['seconds']:>9.3f}s  "
            f"{fallback['seconds']:>9.3f}s  {speed:>7.1f}x"
        )
    if rows[0][1]["kernel"] != "compiled":
        print("note: compiled kernel unavailable; both columns ran pure Python")


if __name__ == "__main__":
    main()
