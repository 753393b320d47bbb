"""Compare numba and numpy kernel backends on the full fixed-point pipeline.

    python3 benchmarks/bench_backends.py [--sizes 64,128,512] [--frames 200]
"""
import argparse

from fxretina.bench import available_backends, measure


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="64,128,512")
    ap.add_argument("--frames", type=int, default=200)
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    for size in sizes:
        results = {b: measure(size, args.frames, b) for b in available_backends()}
        for r in results.values():
            print(r.line())
        if len(results) == 2:
            print(f"  speedup numba/numpy at {size}x{size}: "
                  f"{results['numba'].fps / results['numpy'].fps:.1f}x")


if __name__ == "__main__":
    main()
