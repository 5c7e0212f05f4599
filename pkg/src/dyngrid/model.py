"""Observation model for sparse recovery over a parametric dictionary.

A measurement vector is modeled as ``y = A(theta) x + w`` where the columns of
``A`` are produced by a :class:`ParametricDictionary` evaluated at the rows of
a :class:`GridParams` (the dynamic grid), ``x`` is a sparse complex gain
vector, and ``w`` is circular complex Gaussian noise with per-entry variance
``1 / noise_precision``.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "GridRangeError",
    "SingularSystemError",
    "GridParams",
    "ParametricDictionary",
    "FourierDictionary",
    "GroundTruth",
    "Observation",
    "assemble_matrix",
    "synthesize_observation",
    "residual",
]


class GridRangeError(ValueError):
    """A grid row lies outside the dictionary's valid parameter range."""

    def __init__(self, column: int, dimension: int, value: float, bounds):
        self.column = int(column)
        self.dimension = int(dimension)
        self.value = float(value)
        self.bounds = (float(bounds[0]), float(bounds[1]))
        super().__init__(
            f"grid row {self.column}, dimension {self.dimension}: value "
            f"{self.value!r} outside valid range [{self.bounds[0]!r}, "
            f"{self.bounds[1]!r}]"
        )


class SingularSystemError(RuntimeError):
    """A linear system required by an update was numerically singular."""

    def __init__(self, message: str, cond: Optional[float] = None):
        self.cond = cond
        if cond is not None:
            message = f"{message} (condition estimate {cond:.3e})"
        super().__init__(message)


@dataclass
class GridParams:
    """Dynamic grid: an (N, D) array of continuous dictionary parameters.

    Each row parameterizes one dictionary column. Rows are refined in place
    by the fast-timescale stage; everything else treats the grid as data.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2:
            raise ValueError(f"grid values must be (N, D), got shape {vals.shape}")
        if vals.size and not np.all(np.isfinite(vals)):
            raise ValueError("grid values must be finite")
        self.values = vals

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def param_dim(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "GridParams":
        return GridParams(self.values.copy())

    def with_rows(self, indices: np.ndarray, rows: np.ndarray) -> "GridParams":
        """Return a copy with ``rows`` written at ``indices``; other rows are
        preserved bit-exactly."""
        out = self.values.copy()
        out[np.asarray(indices, dtype=int)] = rows
        return GridParams(out)


class ParametricDictionary(ABC):
    """Maps a D-dimensional continuous parameter to one complex column.

    Concrete dictionaries must be smooth in the parameter so that the
    fast-timescale refiner can use analytic Jacobians.
    """

    row_count: int
    param_dim: int
    valid_range: np.ndarray  # (D, 2) closed parameter box

    @abstractmethod
    def column(self, theta: np.ndarray) -> np.ndarray:
        """Return the dictionary column at ``theta``, shape (row_count,)."""

    @abstractmethod
    def column_jacobian(self, theta: np.ndarray) -> np.ndarray:
        """Return d column / d theta at ``theta``, shape (row_count, D)."""

    def columns(self, thetas: np.ndarray) -> np.ndarray:
        """Stack :meth:`column` over the rows of ``thetas``, shape (M, S).

        The base implementation loops; separable dictionaries override it
        with a broadcast version since this sits on the refiner's hot path.
        """
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        out = np.empty((self.row_count, thetas.shape[0]), dtype=complex)
        for k in range(thetas.shape[0]):
            out[:, k] = self.column(thetas[k])
        return out

    def column_jacobians(self, thetas: np.ndarray) -> np.ndarray:
        """Stack :meth:`column_jacobian`, shape (M, S, D)."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        out = np.empty(
            (self.row_count, thetas.shape[0], self.param_dim), dtype=complex
        )
        for k in range(thetas.shape[0]):
            out[:, k, :] = self.column_jacobian(thetas[k])
        return out

    def contains(self, theta: np.ndarray) -> bool:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        lo, hi = self.valid_range[:, 0], self.valid_range[:, 1]
        return bool(np.all(theta >= lo) and np.all(theta <= hi))

    def clamp(self, theta: np.ndarray) -> np.ndarray:
        """Project ``theta`` onto the valid parameter box."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return np.clip(theta, self.valid_range[:, 0], self.valid_range[:, 1])


class FourierDictionary(ParametricDictionary):
    """One-dimensional line-spectral dictionary.

    Column at normalized frequency ``f`` has entries ``exp(-2j pi m f)`` for
    ``m = 0 .. row_count - 1``; ``f`` lives on [0, 1).
    """

    def __init__(self, row_count: int):
        if row_count < 1:
            raise ValueError("row_count must be positive")
        self.row_count = int(row_count)
        self.param_dim = 1
        # stop just short of 1.0 so clamped parameters never alias onto 0
        self.valid_range = np.array([[0.0, 1.0 - 1e-9]])
        self._m = np.arange(self.row_count)

    def column(self, theta: np.ndarray) -> np.ndarray:
        f = float(np.atleast_1d(theta)[0])
        return np.exp(-2j * np.pi * self._m * f)

    def column_jacobian(self, theta: np.ndarray) -> np.ndarray:
        col = self.column(theta)
        return (-2j * np.pi * self._m * col)[:, None]

    def columns(self, thetas: np.ndarray) -> np.ndarray:
        f = np.atleast_2d(np.asarray(thetas, dtype=float))[:, 0]
        return np.exp(-2j * np.pi * np.outer(self._m, f))

    def column_jacobians(self, thetas: np.ndarray) -> np.ndarray:
        cols = self.columns(thetas)
        return (-2j * np.pi * self._m[:, None] * cols)[:, :, None]


@dataclass
class GroundTruth:
    """Synthesis metadata carried alongside an observation for scoring."""

    theta: np.ndarray  # (K, D) true component parameters
    gains: np.ndarray  # (K,) true complex gains
    noise_precision: float  # inf for noiseless synthesis
    x_full: Optional[np.ndarray] = None  # full on-grid coefficient vector
    snr_db: Optional[float] = None


@dataclass
class Observation:
    """Measurement vector plus optional ground-truth metadata."""

    y: np.ndarray
    meta: Optional[GroundTruth] = None

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=complex).ravel()

    @property
    def m(self) -> int:
        return self.y.shape[0]


def assemble_matrix(dictionary: ParametricDictionary, grid: GridParams) -> np.ndarray:
    """Assemble the (M, N) dictionary matrix at the current grid.

    Parameters
    ----------
    dictionary : ParametricDictionary
    grid : GridParams
        N rows of D parameters each; D must match ``dictionary.param_dim``.

    Raises
    ------
    GridRangeError
        If any grid entry falls outside the dictionary's valid range; the
        error identifies the offending column and dimension.
    """
    if grid.param_dim != dictionary.param_dim:
        raise ValueError(
            f"grid has {grid.param_dim} parameter dims, dictionary expects "
            f"{dictionary.param_dim}"
        )
    lo, hi = dictionary.valid_range[:, 0], dictionary.valid_range[:, 1]
    vals = grid.values
    for d in range(grid.param_dim):
        bad = np.where((vals[:, d] < lo[d]) | (vals[:, d] > hi[d]))[0]
        if bad.size:
            n = int(bad[0])
            raise GridRangeError(n, d, vals[n, d], (lo[d], hi[d]))
    return dictionary.columns(vals)


def synthesize_observation(
    dictionary: ParametricDictionary,
    grid: GridParams,
    x: np.ndarray,
    noise_precision: Optional[float] = None,
    *,
    noiseless: bool = False,
    seed: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> Observation:
    """Draw ``y = A(grid) x + w`` with circular complex Gaussian noise.

    Noise entries are CN(0, 1/noise_precision): variance split evenly between
    real and imaginary parts. Noiseless synthesis is requested with the
    explicit ``noiseless`` flag, never with an infinite precision value.
    """
    x = np.asarray(x, dtype=complex).ravel()
    if x.shape[0] != grid.n:
        raise ValueError(f"x has length {x.shape[0]}, grid has {grid.n} rows")
    a = assemble_matrix(dictionary, grid)
    clean = a @ x
    if noiseless:
        y = clean
        kappa = np.inf
    else:
        if noise_precision is None or not np.isfinite(noise_precision) or noise_precision <= 0:
            raise ValueError("noisy synthesis needs a finite positive noise_precision")
        kappa = float(noise_precision)
        gen = rng if rng is not None else np.random.default_rng(seed)
        scale = np.sqrt(0.5 / kappa)
        w = scale * (gen.standard_normal(clean.shape) + 1j * gen.standard_normal(clean.shape))
        y = clean + w
    active = np.where(x != 0)[0]
    meta = GroundTruth(
        theta=grid.values[active].copy(),
        gains=x[active].copy(),
        noise_precision=kappa,
        x_full=x.copy(),
    )
    return Observation(y=y, meta=meta)


def residual(
    obs: Observation,
    dictionary: ParametricDictionary,
    grid: GridParams,
    x: np.ndarray,
) -> np.ndarray:
    """Return ``y - A(grid) x``."""
    x = np.asarray(x, dtype=complex).ravel()
    a = assemble_matrix(dictionary, grid)
    return obs.y - a @ x
