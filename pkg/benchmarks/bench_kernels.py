"""Time the compiled loop kernels against the vectorized numpy fallbacks.

Shapes follow one second of 8-channel audio through the default 64-8-8 model:
1000 frames, hidden width 64, final-block spatial width 64, plus an order-6
RIR's worth of sinc taps. Run from the repo root:

    python benchmarks/bench_kernels.py [--repeats 5] [--seconds 1.0]

The loop variants are what ship when numba is importable (they make streaming
bit-identical to batch); this script shows what that choice costs or saves
versus BLAS-backed numpy at each kernel's real workload.
"""

import argparse
import time

import numpy as np

import dllrnn.kernels as K
from dllrnn.framing import SAMPLE_RATE, FrameSpec


def time_fn(fn, args, repeats):
    fn(*args)  # warm-up (numba compiles here)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def build_cases(seconds):
    spec = FrameSpec()
    t = int(seconds * SAMPLE_RATE) // spec.hop
    f = 64
    rng = np.random.default_rng(0)

    def r(*shape):
        return rng.standard_normal(shape).astype(np.float32)

    cases = []

    x, w, b = r(8 * t, spec.l_in), r(f, spec.l_in), r(f)
    cases.append((f"linear fwd ({8 * t}x{spec.l_in})->{f}",
                  K.linear_forward_loops, K.linear_forward_numpy, (x, w, b)))
    dout = r(8 * t, f)
    cases.append(("linear bwd", K.linear_backward_loops, K.linear_backward_numpy,
                  (dout, x, w)))

    d = 64  # widest dense-block input in the 64-8-8 model
    xc, wc, bc = r(d, t, f), r(f, 9, d), r(9, f)
    cases.append((f"spatial conv fwd ({d}x{t}x{f})->9",
                  K.spatial_conv_forward_loops, K.spatial_conv_forward_numpy, (xc, wc, bc)))
    dc = r(9, t, f)
    cases.append(("spatial conv bwd", K.spatial_conv_backward_loops,
                  K.spatial_conv_backward_numpy, (dc, xc, wc)))

    xn, gain, bias = r(9 * t, f), r(f), r(f)
    cases.append((f"layer norm fwd ({9 * t}x{f})",
                  K.layer_norm_forward_loops, K.layer_norm_forward_numpy,
                  (xn, gain, bias, np.float32(1e-5))))

    xl = r(t, f)
    wx, wh, bl = r(4 * f, f), r(4 * f, f), r(4 * f)
    h0 = np.zeros(f, np.float32)
    cases.append((f"lstm fwd ({t}x{f})",
                  K.lstm_forward_loops, K.lstm_forward_numpy, (xl, wx, wh, bl, h0, h0)))

    delays = rng.uniform(0.0, 1500.0, 2000)
    amps = rng.uniform(-0.1, 0.1, 2000)
    cases.append(("place taps (2000 taps)", K.place_taps_loops, K.place_taps_numpy,
                  (delays, amps, SAMPLE_RATE)))
    return cases


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="timed runs per kernel")
    parser.add_argument("--seconds", type=float, default=1.0,
                        help="seconds of audio the shapes correspond to")
    args = parser.parse_args()

    mode = "numba" if K.USE_NUMBA else "numpy fallback (loops run as pure python)"
    print(f"active kernel set: {mode}")
    print(f"{'kernel':<34} {'loops':>10} {'numpy':>10} {'loops/numpy':>12}")
    for name, loops_fn, numpy_fn, fn_args in build_cases(args.seconds):
        t_loops = time_fn(loops_fn, fn_args, args.repeats)
        t_numpy = time_fn(numpy_fn, fn_args, args.repeats)
        print(f"{name:<34} {t_loops * 1e3:>8.2f}ms {t_numpy * 1e3:>8.2f}ms "
              f"{t_loops / t_numpy:>11.2f}x")


if __name__ == "__main__":
    main()
