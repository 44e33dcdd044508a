"""Command-line entry point: ``openexciton --config run.cfg``.

Exit codes: 0 success, 1 invalid input, 2 runtime failure.
"""

import argparse
import logging
import os
import sys
import time
import warnings

from .config import POPULATION_METHODS, ConfigError, load_config
from .model import ValidationError
from .output import write_outputs
from .tasks import DEFAULT_MEMORY_CAP, check_memory, derived_quantities, run_task

log = logging.getLogger("openexciton")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def build_parser():
    p = argparse.ArgumentParser(prog="openexciton", description="Exciton dynamics and spectroscopy from a run configuration.")
    p.add_argument("--config", required=True, help="INI run configuration")
    p.add_argument("--output-dir", default=".", help="directory for output files (default: current)")
    p.add_argument("--threads", type=int, default=1, help="worker threads, 0 = number of CPUs (default 1)")
    p.add_argument("--seed", type=int, default=None, help="disorder RNG seed, overrides [disorder] seed")
    p.add_argument("--method", choices=POPULATION_METHODS, default=None, help="override [program] method")
    p.add_argument("--dry-run", action="store_true", help="print derived sizes and exit")
    p.add_argument("--max-memory-gb", type=float, default=DEFAULT_MEMORY_CAP / 1024**3, help="refuse runs above this estimate")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _threads(n):
    """Worker-pool size; the propagation kernels themselves run serially."""
    if n < 0:
        raise ValidationError("--threads must be >= 0")
    return n or os.cpu_count() or 1


def _describe(info):
    lines = []
    for key, value in info.items():
        if key == "memory_bytes":
            value = f"{value} ({value / 1024**2:.2f} MiB)"
        lines.append(f"{key}: {value}")
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    logging.captureWarnings(True)
    cap = int(args.max_memory_gb * 1024**3)
    try:
        threads = _threads(args.threads)
        cfg = load_config(args.config).with_overrides(method=args.method, seed=args.seed)
        info = derived_quantities(cfg)
        if args.dry_run:
            print(_describe(info))
            check_memory(info, cap)
            return EXIT_OK
        start = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            records = run_task(cfg, threads=threads, memory_cap=cap)
        paths = write_outputs(records, args.output_dir)
        log.info("wrote %d files in %.1f s", len(paths), time.perf_counter() - start)
        for path in paths:
            print(path)
        return EXIT_OK
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime error
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
