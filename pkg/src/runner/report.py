import csv
import json
import logging
from pathlib import Path

import numpy as np

from src.errors import AssertionFailedError
from src.runner.manifest import dump_json, read_manifest, stable_manifest

logger = logging.getLogger(__name__)

RESULTS_NAME = 'results.json'
TABLES_DIR = 'tables'
REPORT_NAME = 'report.json'


def lookup_metric(summary, path):
    value = summary
    for part in path.split('.'):
        if isinstance(value, dict) and part in value:
            value = value[part]
        elif isinstance(value, list) and part.isdigit() and int(part) < len(value):
            value = value[int(part)]
        else:
            raise AssertionFailedError(f"metric {path!r} not found in the results")
    return value


def evaluate_assertion(summary, spec):
    op, target, tol = spec.get('op', 'approx'), spec.get('target'), float(spec.get('tol', 0.0))
    record = {'name': spec.get('name', spec['metric']), 'metric': spec['metric'], 'op': op, 'target': target,
              'tol': tol, 'observed': None, 'passed': False, 'error': None}
    try:
        observed = lookup_metric(summary, spec['metric'])
    except AssertionFailedError as exc:
        record['error'] = str(exc)
        return record
    record['observed'] = observed
    if op == 'true':
        record['passed'] = bool(observed)
    elif op == 'false':
        record['passed'] = not bool(observed)
    elif not isinstance(observed, (int, float)) or not np.isfinite(observed):
        record['error'] = "observed value is not a finite number"
    elif not isinstance(target, (int, float)):
        record['error'] = f"op {op!r} needs a numeric target"
    elif op == 'approx':
        record['passed'] = bool(abs(observed - target) <= tol)
    elif op == 'le':
        record['passed'] = bool(observed <= target + tol)
    else:
        record['passed'] = bool(observed >= target - tol)
    return record


def evaluate_assertions(summary, assertions):
    records = [evaluate_assertion(summary, spec) for spec in assertions]
    for r in records:
        if not r['passed']:
            logger.warning("assertion %s failed: observed %s, %s %s (tol %g)%s", r['name'], r['observed'], r['op'],
                           r['target'], r['tol'], f" ({r['error']})" if r['error'] else '')
    return records


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(path, rows, leading=None):
    columns = list(leading or {})
    for row in rows:
        columns.extend(k for k in row if k not in columns)
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            merged = dict(leading or {}, **row)
            writer.writerow([_cell(merged.get(c, '')) for c in columns])


def write_results(out_dir, data, assertions):
    out_dir = Path(out_dir)
    tables = data.get('tables', {})
    if tables:
        (out_dir / TABLES_DIR).mkdir(parents=True, exist_ok=True)
    for name, rows in tables.items():
        write_table(out_dir / TABLES_DIR / f"{name}.csv", rows)
    dump_json(out_dir / RESULTS_NAME, {
        'command': data['command'],
        'summary': data['summary'],
        'assertions': assertions,
        'tables': {name: len(rows) for name, rows in tables.items()},
    })


def _read_tables(run_dir):
    tables = {}
    table_dir = Path(run_dir) / TABLES_DIR
    if table_dir.exists():
        for path in sorted(table_dir.glob('*.csv')):
            with open(path, newline='') as handle:
                tables[path.stem] = list(csv.DictReader(handle))
    return tables


def report(artifact_dirs, out=None):
    """Merge run directories into one JSON plus one tidy CSV per table.

    Rows of the plot CSVs carry a ``run`` index when several directories
    are merged. Volatile manifest fields are left out so reports of
    identical runs are identical.
    """
    artifact_dirs = [Path(d) for d in ([artifact_dirs] if isinstance(artifact_dirs, (str, Path)) else artifact_dirs)]
    out = Path(out) if out is not None else artifact_dirs[0] / 'report'
    runs, merged = [], {}
    for i, run_dir in enumerate(artifact_dirs):
        manifest = read_manifest(run_dir)
        results_path = run_dir / RESULTS_NAME
        results = json.loads(results_path.read_text(encoding='utf-8')) if results_path.exists() else {}
        runs.append({
            'manifest': stable_manifest(manifest),
            'summary': results.get('summary'),
            'assertions': results.get('assertions', []),
            'tables': results.get('tables', {}),
        })
        for name, rows in _read_tables(run_dir).items():
            leading = {'run': i} if len(artifact_dirs) > 1 else None
            merged.setdefault(name, []).extend(dict(leading or {}, **row) for row in rows)

    out.mkdir(parents=True, exist_ok=True)
    passed = all(r['manifest'].get('status') == 'passed' for r in runs)
    dump_json(out / REPORT_NAME, {'passed': passed, 'runs': runs})
    for name, rows in merged.items():
        write_table(out / f"plot_{name}.csv", rows)
    logger.info("report over %d run(s) written to %s", len(runs), out)
    return out
