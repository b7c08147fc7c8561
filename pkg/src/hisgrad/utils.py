from functools import wraps
from time import asctime, localtime, time
from typing import *

import numpy as np  # type: ignore
import scipy.special as sp  # type: ignore


def randseed(random_state: np.random.RandomState):
    """
    Sometimes we need to generate a new random seed from a ``RandomState``,
    e.g. to hand an independent generator to an environment or to the coalition
    sampler without the two drawing from the same stream.
    """
    # Highest possible seed is `2**32 - 1` for NumPy legacy generators.
    return random_state.randint(2**32 - 1)


def logstartstop(f):
    """
    Simple decorator for adding stdout prints when the given callable is called
    and when it returns.
    """
    @wraps(f)
    def wrap(*args, **kw):
        ts = time()
        print(f"Start {f.__name__} at {asctime(localtime(ts))}")
        r = f(*args, **kw)
        te = time()
        print(f"Stop {f.__name__} after %2.4f s" % (te - ts))
        return r

    return wrap


def known_issue(expl, variables, report=False):
    """
    Document a known issue.
    """
    print(f"Warning: {expl}.")
    if report:
        print("This should not have occurred, please report it!")
    else:
        print("This is a known issue and can probably be ignored.")
    print(f"Relevant variables: {variables}.")


def popcount(masks: np.ndarray):
    """
    Number of set bits of each entry of an array of non-negative integers
    (i.e. coalition sizes of bitset-encoded coalitions).

    Parameters
    ----------
    masks : array of int
        Non-negative integers below ``2**32``.

    Returns
    -------
    array of int
        Same shape as ``masks``.
    """
    masks = np.asarray(masks, dtype=np.int64)
    count = np.zeros(masks.shape, dtype=np.int64)
    for bit in range(32):
        count += (masks >> bit) & 1
    return count


def log_factorial(k):
    """
    ``log(k!)`` via the log-gamma function; exact enough for all coalition
    weights we need and free of overflow.
    """
    return sp.gammaln(np.asarray(k, dtype=float) + 1)


def softplus(x):
    """
    Numerically stable ``log(1 + exp(x))``.
    """
    return np.logaddexp(0, x)


def check_finite(name: str, *arrays):
    """
    Raise ``FloatingPointError`` if any of the given arrays contains a
    non-finite value.
    """
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError(f"Non-finite values in {name}")
