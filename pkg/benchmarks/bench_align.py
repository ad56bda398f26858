"""Time aligner EM with the compiled and the pure-Python kernels.

    python3 benchmarks/bench_align.py [--pairs 2000] [--iterations 5] [--workers 1 4]

Both kernels run on the same synthetic bitext; the script checks that they
produce the same translation table before reporting timings. The E-step is
also timed on its own, since end-to-end runs include corpus encoding and
building the translation-table dict, which are plain Python either way.
"""
import argparse
import time

import numpy as np

from bootparse import _align_py, aligner, synthetic
from bootparse.aligner import AlignerConfig, train_aligner


def kernels():
    out = {"python": _align_py}
    try:
        from bootparse import _align_ext
        out["cython"] = _align_ext
    except ImportError:
        pass
    return out


def bench(corpus, kernel, cfg, repeat):
    saved = aligner._kernels
    aligner._kernels = kernel
    try:
        best, model = float("inf"), None
        for _ in range(repeat):
            t0 = time.perf_counter()
            model = train_aligner(corpus, cfg)
            best = min(best, time.perf_counter() - t0)
        return best, model
    finally:
        aligner._kernels = saved


def bench_estep(corpus, kernel, iterations):
    enc = aligner._Encoded(corpus)
    t = aligner._init_t(enc)
    out = np.empty(len(enc.pair_idx))
    t0 = time.perf_counter()
    for _ in range(iterations):
        kernel.estep(enc.tgt_len, enc.src_len, enc.pair_off, enc.pair_idx, t, 0.08, 4.0, 0.1,
                     out, 0, enc.n_sent)
    return time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=2000)
    ap.add_argument("--vocab", type=int, default=500)
    ap.add_argument("--iterations", type=int, default=5)
    ap.add_argument("--workers", type=int, nargs="+", default=[1])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    lex = synthetic.bijective_lexicon([f"w{i:04d}" for i in range(args.vocab)])
    corpus, _ = synthetic.parallel_corpus(args.pairs, lex, seed=0, min_len=5, max_len=25)
    links = sum(len(s) * len(t) for s, t in corpus)
    print(f"{args.pairs} pairs, {links} candidate links per E-step, {args.iterations} iterations")

    found = kernels()
    if "cython" not in found:
        print("compiled kernel not built; timing the pure-Python kernel only")
    ref = None
    print(f"{'kernel':<8} {'workers':>7} {'seconds':>9} {'links/s':>12}")
    for name, kern in found.items():
        for w in args.workers:
            cfg = AlignerConfig(iterations=args.iterations, workers=w)
            secs, model = bench(corpus, kern, cfg, args.repeat)
            rate = links * (args.iterations + 1) / secs
            print(f"{name:<8} {w:>7} {secs:>9.3f} {rate:>12.3e}")
            keys = sorted(model.ttable)
            vals = np.array([model.ttable[k] for k in keys])
            if ref is None:
                ref = (keys, vals)
            elif keys != ref[0] or not np.allclose(vals, ref[1], atol=1e-9):
                raise SystemExit(f"{name} (workers={w}) disagrees with the first run")
    print("all runs agree")
    print(f"\nE-step kernel only, {args.iterations} passes")
    base = None
    for name, kern in found.items():
        secs = min(bench_estep(corpus, kern, args.iterations) for _ in range(args.repeat))
        base = base or secs
        print(f"{name:<8} {secs:>9.4f}s  speedup {base / secs:.1f}x")


if __name__ == "__main__":
    main()
