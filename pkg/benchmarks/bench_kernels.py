"""Time the sandwich kernels on the compiled and numpy backends.

    python3 benchmarks/bench_kernels.py [--sizes 2e4,2e5,1e6] [--k 25] [--repeat 5]

Both backends are checked to agree before timing.
"""

import argparse
import time

import numpy as np

from sgimc import _pykernels, sparse
from sgimc.sparse import OmegaSparseMatrix, sandwich_contract, sandwich_expand

try:
    from sgimc import _ckernels
except ImportError:
    _ckernels = None


def _problem(nnz, k, d, rng):
    n1 = n2 = int(np.ceil(np.sqrt(4 * nnz)))
    flat = rng.choice(n1 * n2, size=nnz, replace=False)
    rows, cols = np.divmod(flat, n2)
    S = OmegaSparseMatrix(rows, cols, rng.normal(size=nnz), (n1, n2))
    return S, rng.normal(size=(n1, d)), rng.normal(size=(n2, k)), rng.normal(size=(d, k))


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", default="2e4,2e5,1e6", help="comma-separated |Omega| values")
    p.add_argument("--k", type=int, default=25)
    p.add_argument("--d", type=int, default=100)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args(argv)

    backends = {"numpy": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled kernels not built; timing the numpy fallback only")
    sparse.set_num_threads(args.threads)
    rng = np.random.default_rng(0)

    print(f"{'|Omega|':>9} {'kernel':>9} " + " ".join(f"{b:>10}" for b in backends)
          + ("   speedup" if len(backends) == 2 else ""))
    for nnz in (int(float(s)) for s in args.sizes.split(",")):
        S, X, Q, D = _problem(nnz, args.k, args.d, rng)
        for name, call in (("contract", lambda: sandwich_contract(X, S, Q)),
                           ("expand", lambda: sandwich_expand(X, D, Q, S).values)):
            times, outs = {}, {}
            for b, mod in backends.items():
                sparse._backend = mod
                outs[b] = call()
                times[b] = _best(call, args.repeat)
            ref = outs["numpy"]
            for b, out in outs.items():
                err = np.linalg.norm(out - ref) / max(np.linalg.norm(ref), 1e-300)
                if err > 1e-12:
                    raise SystemExit(f"{b} disagrees with numpy on {name}: rel err {err:.2e}")
            line = f"{nnz:>9} {name:>9} " + " ".join(f"{times[b] * 1e3:>8.2f}ms" for b in times)
            if len(times) == 2:
                line += f"   {times['numpy'] / times['cython']:>6.2f}x"
            print(line)
    sparse._backend = backends.get("cython", _pykernels)


if __name__ == "__main__":
    main()
