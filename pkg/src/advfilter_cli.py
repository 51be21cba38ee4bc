"""Console entry point.

Lives outside the package so that --single-thread can pin the BLAS thread
pools through environment variables before numpy is first imported; once
the package (and with it numpy) is loaded those variables are ignored.
"""

import os
import sys

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def main(argv=None) -> int:
    args = sys.argv[1:] if argv is None else list(argv)
    if "--single-thread" in args:
        for var in _THREAD_VARS:
            os.environ[var] = "1"
    from advfilter.cli import main as run
    return run(args)


if __name__ == "__main__":
    raise SystemExit(main())
