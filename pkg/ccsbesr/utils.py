import os

import numpy as np


__all__ = ['CCSBESRError', 'InvalidArgumentError', 'InvalidStateError',
           'THREADS_ENV', 'get_thread_count', 'as_array', 'check_shapes_equal']


THREADS_ENV = 'CCSBESR_THREADS'


class CCSBESRError(Exception):
    pass


class InvalidArgumentError(CCSBESRError, ValueError):
    pass


class InvalidStateError(CCSBESRError, RuntimeError):
    pass


def get_thread_count(default=1):
    """Return the worker thread count.

    The ``CCSBESR_THREADS`` environment variable caps the given default.

    Args:
        default (int)[1]: Requested number of threads.

    Returns:
        threads (int): Number of worker threads to use (at least 1).
    """
    threads = max(int(default or 1), 1)
    value = os.environ.get(THREADS_ENV, '').strip()
    if value:
        try:
            threads = min(threads, max(int(value), 1))
        except ValueError as err:
            raise InvalidArgumentError('{} must be an integer, got "{}"'.format(THREADS_ENV, value)) from err
    return threads


def as_array(value, dtype=None):
    """Return the numpy array behind a Tensor, or the value converted to an array."""
    data = getattr(value, 'data', value)
    if dtype is None:
        return np.asarray(data)
    return np.asarray(data, dtype=dtype)


def check_shapes_equal(*items, what='inputs'):
    """Raise InvalidArgumentError if the given tensors/arrays do not share one shape."""
    shapes = [tuple(np.shape(getattr(item, 'data', item))) for item in items]
    if any(shape != shapes[0] for shape in shapes[1:]):
        raise InvalidArgumentError('Shape mismatch between {}: {}'.format(what, shapes))
    return shapes[0]
