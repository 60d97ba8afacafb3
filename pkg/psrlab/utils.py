"""Shared numerical helpers: capacity guard, rank, norms, seeding and trajectory indexing."""

import itertools
import logging
import zlib

import numpy as np

from psrlab.exceptions import CapacityError
from psrlab.metrics import psrlab_capacity_rejections_total
from psrlab.settings import get_app_settings

logger = logging.getLogger(__name__)


def check_capacity(operation, required):
    """Raise ``CapacityError`` when ``required`` exceeds the configured enumeration cap.

    Args:
        operation (str): Name of the operation, used for the error message and metric label.
        required (int): Number of entries the exact enumeration needs.
    """
    cap = get_app_settings()["enumeration_cap"]
    if required > cap:
        psrlab_capacity_rejections_total.labels(operation=operation).inc()
        logger.info("Rejected %s: %d entries above cap %d", operation, required, cap)
        raise CapacityError(operation, required, cap)


def numerical_rank(matrix, tol=None):
    """Number of singular values above ``tol * sigma_max`` (0 for an all-zero matrix)."""
    if tol is None:
        tol = get_app_settings()["rank_tolerance"]
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.size == 0:
        return 0
    sigma = np.linalg.svd(matrix, compute_uv=False)
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    return int(np.sum(sigma > tol * sigma[0]))


def norm_1to1(matrix):
    """The ℓ1→ℓ1 operator norm, i.e. the largest absolute column sum."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.size == 0:
        return 0.0
    return float(np.abs(matrix).sum(axis=0).max())


def _key_to_int(key):
    if isinstance(key, (int, np.integer)):
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


def derive_rng(root_seed, *keys):
    """Return a generator for one (algorithm, iteration, purpose) slot of a root seed.

    Keys may be ints or strings; strings are hashed with CRC32 so the split is stable
    across interpreter runs.
    """
    spawn_key = tuple(_key_to_int(key) for key in keys)
    return np.random.default_rng(np.random.SeedSequence(int(root_seed), spawn_key=spawn_key))


def as_generator(rng_seed):
    """Accept an int seed, a ``SeedSequence`` or a ``Generator`` and return a ``Generator``."""
    return np.random.default_rng(rng_seed)


def num_trajectories(num_obs, num_actions, steps):
    """Number of alternating (o, a) sequences of the given length."""
    return (num_obs * num_actions) ** steps


def trajectory_index(trajectory, num_obs, num_actions):
    """Position of ``trajectory`` in C order over (o_1, a_1, o_2, a_2, ...)."""
    index = 0
    for position, symbol in enumerate(trajectory):
        base = num_obs if position % 2 == 0 else num_actions
        index = index * base + int(symbol)
    return index


def iter_trajectories(num_obs, num_actions, steps):
    """Yield every (o_1, a_1, ..., o_steps, a_steps) tuple in index order."""
    return itertools.product(*([range(num_obs), range(num_actions)] * steps))


def iter_histories(num_obs, num_actions, step):
    """Yield every observable history (o_1, a_1, ..., o_step) in index order."""
    return itertools.product(*([range(num_obs), range(num_actions)] * (step - 1) + [range(num_obs)]))


def format_trajectory(trajectory):
    """Render a trajectory as ``o0-a1-o1-a0``."""
    return "-".join(f"{'o' if position % 2 == 0 else 'a'}{symbol}" for position, symbol in enumerate(trajectory))


def parse_trajectory(text):
    """Inverse of :func:`format_trajectory`."""
    if not text:
        return ()
    return tuple(int(token[1:]) for token in text.split("-"))


def is_column_stochastic(matrix, tol=None):
    """True when every column is nonnegative and sums to one within ``tol``."""
    if tol is None:
        tol = get_app_settings()["stochastic_tolerance"]
    matrix = np.asarray(matrix, dtype=float)
    return bool(np.all(matrix >= 0.0) and np.all(np.abs(matrix.sum(axis=0) - 1.0) <= tol))


def argmax_with_ties(values, axis=-1, tol=1e-12):
    """Argmax along ``axis`` where near-ties within ``tol`` resolve to the smallest index."""
    values = np.asarray(values, dtype=float)
    best = values.max(axis=axis, keepdims=True)
    near = values >= best - tol * np.maximum(1.0, np.abs(best))
    return np.argmax(near, axis=axis)
