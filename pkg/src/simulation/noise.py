"""Philox increments keyed by (seed, stream, chunk, step)."""
import numpy as np

CHUNK_SIZE = 4096


def _generator(seed, stream, chunk, step, purpose):
    counter = [0, chunk, step, 2 * stream + purpose]
    return np.random.Generator(np.random.Philox(key=seed, counter=counter))


def chunk_bounds(n):
    return [(start, min(start + CHUNK_SIZE, n)) for start in range(0, n, CHUNK_SIZE)]


def chunk_increments(seed, stream, chunk, step, size, dim_w, dt):
    return np.sqrt(dt) * _generator(seed, stream, chunk, step, 0).standard_normal((size, dim_w))


def step_increments(seed, stream, step, n, dim_w, dt):
    return np.concatenate([
        chunk_increments(seed, stream, start // CHUNK_SIZE, step, stop - start, dim_w, dt)
        for start, stop in chunk_bounds(n)
    ])


def initial_generator(seed, stream):
    """Generator for drawing initial positions, disjoint from every increment block."""
    return _generator(seed, stream, 0, 0, 1)
