"""
Box-Cox power transform with a shift for non-positive data, grid-search
maximum-likelihood estimation of the power and the training-time variant that
adds the data minimum back onto the transformed values.
"""
from dataclasses import dataclass

import numpy as np  # type: ignore
import scipy.special as ss  # type: ignore
import scipy.stats as sstats  # type: ignore

# Below this magnitude, λ is treated as exactly 0 (log branch).
LAMBDA_ZERO = 1e-8


@dataclass(frozen=True)
class BoxCoxFit:
    """
    Parameters of the shifted Box-Cox transform ``x ↦ BC(x - x_min + shift,
    lambda_)``.
    """
    lambda_: float
    x_min: float
    shift: float

    def __post_init__(self):
        if not self.shift > 0:
            raise ValueError(f"shift must be positive but is {self.shift}")


def lambda_grid(lambda_min=-2.0, lambda_max=2.0, lambda_step=0.05):
    """
    The candidate powers; rounded so that the grid contains an exact 0 (and an
    exact 1).
    """
    n_steps = int(round((lambda_max - lambda_min) / lambda_step))
    return np.round(lambda_min + lambda_step * np.arange(n_steps + 1), 10)


def bc_transform(x, lambda_: float):
    """
    Standard Box-Cox transform ``(x^λ - 1) / λ`` (``log x`` for λ = 0).

    Parameters
    ----------
    x : float or array
        Strictly positive input(s).
    lambda_ : float
    """
    x = np.asarray(x, dtype=float)
    if not np.all(x > 0):
        raise ValueError("Box-Cox transform requires strictly positive input; "
                         "use the shifted form for other data")
    if abs(lambda_) <= LAMBDA_ZERO:
        y = np.log(x)
    else:
        y = ss.boxcox(x, lambda_)
    return float(y) if y.ndim == 0 else y


def _shifted(x, fit: BoxCoxFit):
    z = np.asarray(x, dtype=float) - fit.x_min + fit.shift
    if not np.all(z > 0):
        raise ValueError(
            f"Input below x_min - shift = {fit.x_min - fit.shift} cannot be "
            "transformed with this fit")
    return z


def bc_transform_shifted(x, fit: BoxCoxFit):
    """
    Box-Cox transform of ``x - x_min + shift``.
    """
    return bc_transform(_shifted(x, fit), fit.lambda_)


def bc_transform_grad(x, fit: BoxCoxFit):
    """
    Derivative of ``bc_transform_shifted`` with respect to ``x`` (the fit held
    constant), i.e. ``(x - x_min + shift)^(λ - 1)``.

    For ``λ < 1`` this is largest at ``x = x_min`` where it equals
    ``shift^(λ - 1)``; with the default shift and ``λ = -2`` that is of order
    ``1e11`` to ``1e12``. The value is exact and left unclipped: policy
    gradients built from it go through Adam, whose first-step size is bounded
    by the learning rate, and ``max_grad_norm`` clips it further if set.
    """
    z = _shifted(x, fit)
    return z**(fit.lambda_ - 1)


def default_shift(x_min: float) -> float:
    return 1e-4 * max(1.0, abs(x_min)) + 1e-6


def estimate_lambda(data,
                    lambda_min=-2.0,
                    lambda_max=2.0,
                    lambda_step=0.05) -> BoxCoxFit:
    """
    Fit the shifted Box-Cox transform to the data by maximising the profile
    log-likelihood over a fixed grid of powers.

    Ties are broken towards the power closest to 1 (i.e. towards the
    identity transform).

    Parameters
    ----------
    data : array of shape (m,)
        At least two values, not all equal.

    Returns
    -------
    BoxCoxFit
    """
    data = np.asarray(data, dtype=float).reshape(-1)
    if len(data) < 2:
        raise ValueError("Box-Cox fitting requires at least two values")
    if not np.all(np.isfinite(data)):
        raise ValueError("Box-Cox fitting requires finite values")
    if np.all(data == data[0]):
        raise ValueError("constant input")

    x_min = float(np.min(data))
    shift = default_shift(x_min)
    z = data - x_min + shift

    grid = lambda_grid(lambda_min, lambda_max, lambda_step)
    llf = np.array([sstats.boxcox_llf(lmb, z) for lmb in grid])
    # boxcox_llf may return nan if the transformed data has zero variance
    # numerically; such a power never wins.
    llf = np.where(np.isfinite(llf), llf, -np.inf)
    best = np.max(llf)
    if not np.isfinite(best):
        raise ValueError("constant input")
    ties = np.flatnonzero(llf >= best - 1e-12 * max(1.0, abs(best)))
    winner = ties[np.argmin(np.abs(grid[ties] - 1))]

    return BoxCoxFit(lambda_=float(grid[winner]), x_min=x_min, shift=shift)


def bc_training_transform(values, fit: BoxCoxFit = None, **grid):
    """
    Training-time Box-Cox: fit the power on ``values``, transform them and add
    ``x_min`` back so that the result stays on the scale of the input.

    Parameters
    ----------
    values : array of shape (m,)
    fit : BoxCoxFit or None
        If given, use this fit instead of estimating one (this lets callers
        treat the fit as a constant).
    **grid
        ``lambda_min``, ``lambda_max``, ``lambda_step`` passed to
        ``estimate_lambda``.

    Returns
    -------
    array of shape (m,)
    """
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        raise ValueError("Box-Cox fitting requires at least two values")
    if fit is None:
        fit = estimate_lambda(values, **grid)
    return bc_transform_shifted(values, fit) + fit.x_min
