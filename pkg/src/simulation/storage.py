"""On-disk formats for path bundles.

Increment files: the 6-byte magic ``MVSDE1``, three little-endian uint64
dimensions (steps, particles, noise dim), then the increments as
little-endian float64 in C order.
"""
import json
import logging
import struct
from pathlib import Path

import numpy as np

from src.errors import MissingIncrementsError

logger = logging.getLogger(__name__)

MAGIC = b'MVSDE1'
_HEADER = struct.Struct('<3Q')


def write_increments(path, increments):
    if increments is None:
        raise MissingIncrementsError("bundle was simulated without stored increments")
    data = np.ascontiguousarray(increments, dtype='<f8')
    with open(path, 'wb') as handle:
        handle.write(MAGIC)
        handle.write(_HEADER.pack(*data.shape))
        handle.write(data.tobytes())
    logger.debug("wrote increments %s to %s", data.shape, path)


def read_increments(path):
    with open(path, 'rb') as handle:
        magic = handle.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path} is not an increment file (magic {magic!r})")
        shape = _HEADER.unpack(handle.read(_HEADER.size))
        data = np.frombuffer(handle.read(), dtype='<f8')
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path} holds {data.size} values, header says {shape}")
    return data.reshape(shape).astype(float)


def write_snapshots(out_dir, bundle, prefix='snapshot'):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    times = bundle.snapshot_times or (float(bundle.times[-1]),)
    written = []
    for t in times:
        j = bundle.step_index(t)
        path = out_dir / f"{prefix}_t{t:.6g}.csv"
        header = ','.join(f"x{i}" for i in range(bundle.dim))
        np.savetxt(path, bundle.states[j], delimiter=',', header=header, comments='', fmt='%.17g')
        written.append(path.name)
    return written


def write_bundle(out_dir, bundle, cfg, metadata):
    """Snapshots as CSV, increments as a flat binary file, metadata as JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = write_snapshots(out_dir, bundle)
    if bundle.increments is not None:
        write_increments(out_dir / 'increments.bin', bundle.increments)
        files.append('increments.bin')
    meta = dict(metadata)
    meta.update({
        'model': bundle.model,
        'seed': bundle.seed,
        'stream': bundle.stream,
        'n_particles': bundle.n_particles,
        'dt': cfg.dt,
        't_end': cfg.t_end,
        'capped_fraction': bundle.capped_fraction,
        'files': files,
    })
    with open(out_dir / 'simulation.json', 'w') as handle:
        json.dump(meta, handle, indent=2, sort_keys=True)
    return meta
