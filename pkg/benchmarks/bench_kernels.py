"""Compare the compiled recursions with their NumPy/SciPy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from aadmm import kernels
from aadmm.lure import AlgorithmParams, ProblemClass, build_plant
from aadmm.ozf import build_augmented_plant


def _cases(rng):
    aug = build_augmented_plant(build_plant(AlgorithmParams(1.0, 0.5)), ProblemClass.from_kappa(10), 6)
    h = -rng.uniform(0, 0.1, 7)
    h[0] = 1.0
    C, D = aug.C(h, h), aug.D(h, h)
    w = rng.standard_normal((2000, 2))
    q = rng.standard_normal((2000, 64))
    return {
        "lti_response (T=2000, n=16)": (
            lambda: kernels.py_lti_response(aug.A, aug.B, C, D, w),
            None if kernels.BACKEND != "compiled" else lambda: kernels.lti_response(aug.A, aug.B, C, D, w),
        ),
        "discounted_cumsum (T=2000, 64 cols)": (
            lambda: kernels.py_discounted_cumsum(q, 0.81),
            None if kernels.BACKEND != "compiled" else lambda: kernels.discounted_cumsum(q, 0.81),
        ),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"kernel backend: {kernels.BACKEND}")
    for name, (py, comp) in _cases(rng).items():
        t_py = min(timeit.repeat(py, number=1, repeat=args.repeat))
        if comp is None:
            print(f"{name:40s} python {t_py * 1e3:8.3f} ms   compiled n/a")
            continue
        np.testing.assert_allclose(comp()[0] if isinstance(comp(), tuple) else comp(),
                                   py()[0] if isinstance(py(), tuple) else py(), rtol=1e-12, atol=1e-12)
        t_c = min(timeit.repeat(comp, number=1, repeat=args.repeat))
        print(f"{name:40s} python {t_py * 1e3:8.3f} ms   compiled {t_c * 1e3:8.3f} ms   "
              f"speedup {t_py / t_c:6.1f}x")


if __name__ == "__main__":
    main()
