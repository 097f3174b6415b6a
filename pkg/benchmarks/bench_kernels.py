"""Time the compiled kernels against the pure-numpy fallback.

Each mode runs in its own interpreter because the JIT switch is read at
import time.  Usage: ``python benchmarks/bench_kernels.py [--repeat N]``.
"""
import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, time
from pathlib import Path
from sealeg.config import load_config
from sealeg.experiments import landing_comparison, run_drop_test

cfg = load_config(Path({configs!r}) / "landing.toml")
t0 = time.perf_counter()
run_drop_test(cfg)  # includes compilation (or cache load) on the JIT path
first = time.perf_counter() - t0
times = []
for _ in range({repeat}):
    t0 = time.perf_counter()
    landing_comparison(cfg)
    times.append(time.perf_counter() - t0)
print(json.dumps({{"first": first, "best": min(times)}}))
"""


def run(disable_jit: bool, repeat: int, configs: str) -> dict:
    env = dict(os.environ, SEALEG_DISABLE_JIT="1" if disable_jit else "0")
    code = WORKLOAD.format(configs=configs, repeat=repeat)
    out = subprocess.run([sys.executable, "-c", code], env=env, check=True,
                         capture_output=True, text=True).stdout
    return json.loads(out.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    configs = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "configs")
    jit = run(False, args.repeat, configs)
    py = run(True, args.repeat, configs)
    print("landing comparison (locked + active, 1 s each)")
    print(f"  numba : first run {jit['first']:.3f} s, best {jit['best']:.4f} s")
    print(f"  numpy : first run {py['first']:.3f} s, best {py['best']:.4f} s")
    print(f"  speedup {py['best'] / jit['best']:.1f}x")


if __name__ == "__main__":
    main()
