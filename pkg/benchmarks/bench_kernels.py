"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Also reports end-to-end throughput of the gated Otsu pipeline under each
backend, each in a fresh interpreter so the import-time switch takes effect.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from glottisgate import _pykernels

try:
    from glottisgate import _ckernels
except ImportError:
    _ckernels = None


def cases(rng):
    img = rng.integers(0, 256, (256, 256), dtype=np.uint8)
    pred = rng.random((256, 256)) < 0.3
    gt = rng.random((256, 256)) < 0.3
    hist = np.bincount(img.ravel(), minlength=256).astype(np.int64)
    detected = (rng.random(20000) < 0.4).astype(np.uint8)
    weights = rng.integers(1, 60, 40).astype(np.int64)
    return {
        "confusion_counts 256x256": lambda k: k.confusion_counts(pred, gt),
        "box_histogram 200x200": lambda k: k.box_histogram(img, 20, 20, 220, 220),
        "otsu_level": lambda k: k.otsu_level(hist),
        "gate_statuses n=20000": lambda k: k.gate_statuses(detected, 4),
        "subset_sum_counts n=40 k=20": lambda k: k.subset_sum_counts(weights, 20),
    }


PIPELINE = """
import time
from glottisgate.synth import SynthConfig, generate, oracle_detector
from glottisgate.pipelines import PipelineKind, RunConfig, process_video
frames, truth = generate(SynthConfig(n_frames=400, noise_sigma=4.0))
det = oracle_detector(truth)
t = time.perf_counter()
process_video(RunConfig(pipeline=PipelineKind.OTSU), frames, det)
print(len(frames) / (time.perf_counter() - t))
"""


def pipeline_fps(pure: bool) -> float:
    env = dict(os.environ, GLOTTISGATE_PURE_PYTHON="1" if pure else "")
    out = subprocess.run([sys.executable, "-c", PIPELINE], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None, help="also write results here")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    rows = []
    print(f"{'kernel':<30}{'python us':>12}{'cython us':>12}{'speedup':>10}")
    for name, fn in cases(rng).items():
        times = {}
        for label, mod in (("python", _pykernels), ("cython", _ckernels)):
            if mod is None:
                continue
            timer = timeit.Timer(lambda: fn(mod))
            n, _ = timer.autorange()
            times[label] = min(timer.repeat(args.repeat, n)) / n * 1e6
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:<30}{times['python']:>12.1f}{times.get('cython', float('nan')):>12.1f}{speed:>9.1f}x")
        rows.append({"kernel": name, **{f"{k}_us": v for k, v in times.items()}})

    fps = {"python": pipeline_fps(True)}
    if _ckernels is not None:
        fps["cython"] = pipeline_fps(False)
    print("otsu pipeline frames/s: " + ", ".join(f"{k} {v:.0f}" for k, v in fps.items()))

    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"kernels": rows, "pipeline_fps": fps}, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
