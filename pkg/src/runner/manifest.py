import json
import logging
import platform
import subprocess
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from src.errors import MissingManifestError

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'
PACKAGES = ('numpy', 'scipy', 'POT', 'joblib')
VOLATILE_KEYS = ('timestamp', 'threads', 'output_dir')


def package_versions():
    versions = {'python': platform.python_version()}
    for name in PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = 'not installed'
    return versions


def git_describe(repo_root=None):
    # best effort: the code may run from an exported tree
    root = Path(repo_root) if repo_root else Path(__file__).resolve().parents[2]
    try:
        proc = subprocess.run(['git', 'describe', '--always', '--dirty'], cwd=root, capture_output=True, text=True,
                              timeout=5, check=False)
    except (OSError, subprocess.SubprocessError):
        return 'unknown'
    return proc.stdout.strip() or 'unknown'


def build_manifest(config, status, error=None):
    return {
        'command': config.command,
        'config_sha256': config.digest,
        'seed': config.seed,
        'model': config.model.get('name'),
        'threads': config.threads,
        'output_dir': str(config.output_dir),
        'versions': package_versions(),
        'git': git_describe(),
        'status': status,
        'error': error,
        'timestamp': datetime.now(timezone.utc).isoformat(),
    }


def dump_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + '\n', encoding='utf-8')


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialise {type(value).__name__}")


def write_manifest(out_dir, manifest):
    dump_json(Path(out_dir) / MANIFEST_NAME, manifest)
    logger.debug("manifest written to %s", out_dir)


def read_manifest(out_dir):
    path = Path(out_dir) / MANIFEST_NAME
    if not path.exists():
        raise MissingManifestError(f"{out_dir} has no {MANIFEST_NAME}; was it produced by a scenario run?")
    return json.loads(path.read_text(encoding='utf-8'))


def stable_manifest(manifest):
    return {k: v for k, v in manifest.items() if k not in VOLATILE_KEYS}
