"""Compare the numba kernels with their numpy fallbacks.

Each case runs both paths on the same inputs, checks that the outputs
agree, and reports the best-of-``repeat`` wall time. The first numba call
(compilation or cache load) is excluded.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]
"""

import argparse
import time

import numpy as np

from locstat import _accel
from locstat.measure import _dobrushin_numba, _dobrushin_numpy
from locstat.simulate import SimulationPlan, sample_triangular_array
from locstat.zoo import Curve, ThresholdAR, TvARModel, inar1_example, random_smooth, two_state


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(quick):
    R = 20_000 if quick else 100_000
    m = 200 if quick else 600
    rng = np.random.default_rng(0)
    P = rng.dirichlet(np.ones(m), size=m)
    v = 1.0 + rng.uniform(0, 5, size=m)
    setar = TvARModel(ThresholdAR(Curve.poly(0.3, 0.2), Curve.const(-0.4)))

    def sim(model, n, reps):
        plan = SimulationPlan(n, reps, 1, model, burn_in=50)
        return (lambda: sample_triangular_array(plan, use_numba=True),
                lambda: sample_triangular_array(plan, use_numba=False))

    yield ("dobrushin %dx%d" % (m, m), lambda: _dobrushin_numba(P, v), lambda: _dobrushin_numpy(P, v), False)
    yield ("two-state paths n=100 R=%d" % R,) + sim(two_state(), 100, R) + (True,)
    yield ("5-state paths n=100 R=%d" % R,) + sim(random_smooth(5, 0), 100, R) + (True,)
    yield ("SETAR paths n=200 R=%d" % (R // 10),) + sim(setar, 200, R // 10) + (False,)
    yield ("INAR(1) paths n=200 R=%d" % (R // 10),) + sim(inar1_example(), 200, R // 10) + (True,)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller inputs")
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print("%-32s %10s %10s %8s  %s" % ("case", "numba s", "numpy s", "speedup", "agreement"))
    for name, fast, slow, exact in cases(args.quick):
        fast()  # compile or load from cache
        t_fast, a = best_of(fast, args.repeat)
        t_slow, b = best_of(slow, args.repeat)
        if exact:
            agree = "identical" if np.array_equal(a, b) else "MISMATCH"
        else:
            err = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
            agree = "max |diff| %.1e" % err
        print("%-32s %10.4f %10.4f %7.1fx  %s" % (name, t_fast, t_slow, t_slow / t_fast, agree))


if __name__ == "__main__":
    main()
