"""Execute a scenario's checks (optionally in worker processes) and reduce them into a report."""

import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import load_config, validate_config
from .report import Record, Report
from .scenarios import REGISTRY, Context


def _execute(check, ctx: Context) -> Record:
    start = time.perf_counter()
    try:
        out = check.run()
    except Exception as exc:  # module errors become failed records
        return Record(check.name, check.anchor, False, runtime=time.perf_counter() - start,
                      error=f"{type(exc).__name__}: {exc}")
    rec = Record(check.name, check.anchor, bool(out.passed), out.constants, out.tolerances,
                 time.perf_counter() - start, None, out.series)
    return Record(**rec.to_dict())


def _run_one(cfg: dict, tolerance_scale: float, index: int) -> dict:
    ctx = Context(cfg, tolerance_scale)
    check = REGISTRY[cfg["scenario"]].checks(ctx)[index]
    return _execute(check, ctx).to_dict()


def run_scenario(config, out=None, jobs: int = 1, tolerance_scale: float = 1.0) -> Report:
    """Run the scenario named in ``config`` (a dict or a JSON path).

    Checks are independent; with ``jobs > 1`` they run in worker processes
    and are reassembled in declaration order. Writes ``<scenario>.json`` and
    ``<scenario>.csv`` into ``out`` when given.
    """
    cfg = validate_config(dict(config)) if isinstance(config, dict) else load_config(config)
    if not tolerance_scale > 0:
        raise ValueError("tolerance scale must be positive")
    ctx = Context(cfg, tolerance_scale)
    checks = REGISTRY[cfg["scenario"]].checks(ctx)
    if jobs > 1 and len(checks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(checks))) as pool:
            futures = [pool.submit(_run_one, cfg, tolerance_scale, i) for i in range(len(checks))]
            records = [Record(**f.result()) for f in futures]
    else:
        records = [_execute(c, ctx) for c in checks]
    report = Report(cfg["scenario"], cfg, records, tolerance_scale)
    if out is not None:
        report.write(Path(out))
    return report
