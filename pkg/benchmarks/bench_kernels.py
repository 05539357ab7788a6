"""Compare the compiled and pure-NumPy kernel backends.

Times the hot kernels (fused depthwise conv + bias + ReLU, forward and
backward) and one full training step of the audio-visual recurrent model.
Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats N]

The backend is chosen per-process via ASDKIT_KERNELS, so this script
re-executes itself once per backend and prints a combined table.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def time_call(fn, repeats):
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_one_backend(repeats):
    from asdkit import _kernels
    from asdkit.model import HeadType, Modality, ModelSpec, init_parameters, loss_and_grads

    rng = np.random.default_rng(0)
    results = {"backend": _kernels.BACKEND}

    # Fused depthwise 3x3 + bias + ReLU on a mid-network activation shape.
    x = rng.random((8, 32, 32, 64), dtype=np.float32)
    w = rng.random((3, 3, 64), dtype=np.float32)
    b = rng.random(64, dtype=np.float32)
    results["depthwise_fwd_ms"] = 1e3 * time_call(
        lambda: _kernels.depthwise_bias_relu(x, w, b, 1, 1, 1, 1, 1, 32, 32), repeats
    )
    y = _kernels.depthwise_bias_relu(x, w, b, 1, 1, 1, 1, 1, 32, 32)
    dy = rng.random(y.shape, dtype=np.float32)
    results["depthwise_bwd_ms"] = 1e3 * time_call(
        lambda: _kernels.depthwise_bias_relu_backward(x, w, y, dy.copy(), 1, 1, 1, 1, 1),
        repeats,
    )

    # Fused bias + ReLU over a pointwise-conv output.
    z = rng.random((8 * 32 * 32, 64), dtype=np.float32)
    results["bias_relu_ms"] = 1e3 * time_call(
        lambda: _kernels.bias_relu_inplace(z.copy(), b), repeats
    )

    # One full forward+backward step of the audio-visual recurrent model.
    spec = ModelSpec(modalities=Modality.AV, head=HeadType.GRU, stack_size=2)
    params = init_parameters(spec, seed=0)
    bsz, steps = 4, 20
    visual = rng.random((bsz, steps, 128, 128, 2), dtype=np.float32)
    audio = rng.random((bsz, steps, 64, 48), dtype=np.float32)
    targets = (rng.random((bsz, steps)) > 0.5).astype(np.float32)
    mask = np.ones((bsz, steps), dtype=bool)
    results["train_step_s"] = time_call(
        lambda: loss_and_grads(params, spec, targets, mask, visual=visual, audio=audio),
        max(1, repeats // 3),
    )
    results["train_step_s"] = round(results["train_step_s"], 4)
    return results


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--backend", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.backend:
        print(json.dumps(run_one_backend(args.repeats)))
        return

    rows = []
    for backend in ("pure", "fast"):
        env = dict(os.environ, ASDKIT_KERNELS=backend)
        proc = subprocess.run(
            [sys.executable, __file__, "--repeats", str(args.repeats), "--backend", backend],
            env=env,
            capture_output=True,
            text=True,
        )
        if proc.returncode != 0:
            print(f"{backend}: failed\n{proc.stderr}", file=sys.stderr)
            continue
        rows.append(json.loads(proc.stdout.strip().splitlines()[-1]))

    keys = ["depthwise_fwd_ms", "depthwise_bwd_ms", "bias_relu_ms", "train_step_s"]
    header = f"{'backend':<10}" + "".join(f"{k:>20}" for k in keys)
    print(header)
    for row in rows:
        print(f"{row['backend']:<10}" + "".join(f"{row[k]:>20.3f}" for k in keys))
    if len(rows) == 2:
        speedups = [rows[0][k] / rows[1][k] for k in keys]
        print(f"{'speedup':<10}" + "".join(f"{s:>19.2f}x" for s in speedups))


if __name__ == "__main__":
    main()
