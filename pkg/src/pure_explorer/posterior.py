"""
Exact posteriors over hypotheses for finite-support priors.

Continuous priors are first turned into finite ones with :func:`discretize_prior`. Scalar observations can be
quantized on an :class:`ObservationGrid`; the quantized likelihood is the one the exact solvers use, which keeps
posterior and predictive mixtures consistent with each other.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from pure_explorer.config import DEFAULT_OBS_CELLS, MAX_DISCRETE_MODELS
from pure_explorer.core import Action, History, Hypothesis, Observation, RandomSource
from pure_explorer.envs import SCALAR_FAMILIES, EnvFamily, EnvModel, PriorSpec, magic_phi, sample_env
from pure_explorer.utils.exceptions import (
    EmptyGridError,
    GridTooCoarse,
    NotFiniteSupportError,
    UnsupportedFamilyError,
    ZeroLikelihoodEverywhere,
)

_POINT_ATOL = 1e-9
_GRID_TAIL_SCALES = 4.0


class ObservationGrid:
    """
    Finite quantization of a scalar observation space.

    An interval grid splits ``[low, high]`` into equal-width cells and folds both tails into the edge cells; a
    point grid holds a list of atoms and maps an observation to its nearest atom.
    """

    def __init__(self, edges: Optional[np.ndarray] = None, points: Optional[np.ndarray] = None) -> None:
        if (edges is None) == (points is None):
            raise ValueError("Give either interval edges or grid points")
        if edges is not None:
            edges = np.asarray(edges, dtype=float)
            if edges.size < 2:
                raise EmptyGridError()
        else:
            points = np.unique(np.asarray(points, dtype=float))
            if points.size == 0:
                raise EmptyGridError()
        self.edges = edges
        self.points = points

    @classmethod
    def intervals(cls, low: float, high: float, n_cells: int = DEFAULT_OBS_CELLS) -> ObservationGrid:
        if n_cells < 1:
            raise EmptyGridError()
        if not high > low:
            raise ValueError(f"Grid interval must have high > low, got [{low}, {high}]")
        return cls(edges=np.linspace(low, high, n_cells + 1))

    @classmethod
    def atoms(cls, values: Sequence[float]) -> ObservationGrid:
        return cls(points=np.asarray(values, dtype=float))

    @classmethod
    def for_prior(cls, spec: PriorSpec, n_cells: int = DEFAULT_OBS_CELLS) -> ObservationGrid:
        """
        Default grid for a finite prior: exact atoms when every observation law is a point mass, otherwise an
        interval grid covering every model's means with four standard deviations to spare.
        """
        laws = support_arrays(spec).laws
        loc, scale = laws[..., 0], laws[..., 1]
        if np.all(scale == 0.0):
            return cls.atoms(loc.ravel())
        spread = _GRID_TAIL_SCALES * scale.max()
        return cls.intervals(loc.min() - spread, loc.max() + spread, n_cells)

    @property
    def is_intervals(self) -> bool:
        return self.edges is not None

    @property
    def n_cells(self) -> int:
        return self.edges.size - 1 if self.is_intervals else self.points.size

    @property
    def representatives(self) -> np.ndarray:
        """One observation value per cell: midpoints for intervals, the atoms themselves otherwise."""
        if self.is_intervals:
            return 0.5 * (self.edges[:-1] + self.edges[1:])
        return self.points

    def cell_of(self, x: float) -> int:
        if self.is_intervals:
            return int(np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, self.n_cells - 1))
        return int(np.argmin(np.abs(self.points - x)))

    def cell_probabilities(self, loc: float, scale: float) -> np.ndarray:
        """Mass of each cell under ``N(loc, scale^2)``; a zero scale gives a point mass at ``loc``."""
        probs = np.zeros(self.n_cells)
        if scale <= 0.0:
            probs[self.cell_of(loc)] = 1.0
            return probs
        if self.is_intervals:
            cdf = norm.cdf(self.edges, loc=loc, scale=scale)
            cdf[0], cdf[-1] = 0.0, 1.0
            return np.diff(cdf)
        density = norm.pdf(self.points, loc=loc, scale=scale)
        total = density.sum()
        if total == 0.0:
            probs[self.cell_of(loc)] = 1.0
            return probs
        return density / total


@dataclass(frozen=True)
class SupportArrays:
    """Array view of a finite prior: models, log prior weights, hypothesis of each model and scalar laws."""

    models: Tuple[EnvModel, ...]
    log_prior: np.ndarray
    hyp_of: np.ndarray
    n_hypotheses: int
    laws: Optional[np.ndarray]  # (M, K, 2) location/scale, scalar families only


@lru_cache(maxsize=64)
def support_arrays(spec: PriorSpec) -> SupportArrays:
    if not spec.is_finite:
        raise NotFiniteSupportError()
    models = tuple(spec.support)
    with np.errstate(divide="ignore"):
        log_prior = np.log(np.asarray(spec.weights, dtype=float))
    hyp_of = np.array([m.h_star for m in models], dtype=int)
    laws = None
    if spec.family in SCALAR_FAMILIES:
        laws = np.array([[m.scalar_law(a) for a in range(m.n_arms)] for m in models], dtype=float)
    return SupportArrays(models, log_prior, hyp_of, spec.n_hypotheses, laws)


def cell_likelihoods(spec: PriorSpec, grid: ObservationGrid) -> np.ndarray:
    """Table ``L[M, a, c]`` of cell probabilities for every support model, query and grid cell."""
    arrays = support_arrays(spec)
    if arrays.laws is None:
        raise UnsupportedFamilyError(spec.family.value, "quantized observation likelihoods")
    M, K, _ = arrays.laws.shape
    table = np.empty((M, K, grid.n_cells))
    for m in range(M):
        for a in range(K):
            table[m, a] = arrays.models[m].cell_probabilities(a, grid)
    return table


@dataclass(frozen=True)
class PosteriorState:
    """Posterior weights over support models and their marginal over hypotheses."""

    model_weights: np.ndarray
    hyp_probs: np.ndarray
    log_weights: np.ndarray

    @classmethod
    def from_log_weights(cls, log_weights: np.ndarray, hyp_of: np.ndarray, n_hypotheses: int) -> PosteriorState:
        log_weights = log_weights - logsumexp(log_weights)
        model_weights = np.exp(log_weights)
        hyp_probs = np.bincount(hyp_of, weights=model_weights, minlength=n_hypotheses)
        return cls(model_weights=model_weights, hyp_probs=hyp_probs, log_weights=log_weights)

    @property
    def confidence(self) -> float:
        return float(self.hyp_probs.max())


def prior_state(spec: PriorSpec) -> PosteriorState:
    arrays = support_arrays(spec)
    return PosteriorState.from_log_weights(arrays.log_prior, arrays.hyp_of, arrays.n_hypotheses)


def observation_log_likelihood(
    spec: PriorSpec, h: History, a: Action, x: Observation, grid: Optional[ObservationGrid] = None
) -> np.ndarray:
    """Log-likelihood of ``x`` after query ``a`` at history ``h`` under each support model."""
    arrays = support_arrays(spec)
    if arrays.laws is None:
        return np.array([m.log_density(h, a, x) for m in arrays.models])

    loc, scale = arrays.laws[:, a, 0], arrays.laws[:, a, 1]
    if grid is not None:
        cell = grid.cell_of(x.value)
        probs = np.array([grid.cell_probabilities(l, s)[cell] for l, s in zip(loc, scale)])
        with np.errstate(divide="ignore"):
            return np.log(probs)

    out = np.where(np.isclose(x.value, loc, rtol=0.0, atol=_POINT_ATOL), 0.0, -np.inf)
    noisy = scale > 0.0
    out[noisy] = norm.logpdf(x.value, loc=loc[noisy], scale=scale[noisy])
    return out


def posterior_step(
    state: PosteriorState,
    spec: PriorSpec,
    h: History,
    a: Action,
    x: Observation,
    grid: Optional[ObservationGrid] = None,
) -> PosteriorState:
    """
    Fold one more observation into ``state``.

    Raises
    ------
    ZeroLikelihoodEverywhere
        If ``x`` is impossible under every model that still has mass.
    """
    arrays = support_arrays(spec)
    log_weights = state.log_weights + observation_log_likelihood(spec, h, a, x, grid)
    if not np.isfinite(log_weights).any():
        raise ZeroLikelihoodEverywhere(h.t + 1)
    return PosteriorState.from_log_weights(log_weights, arrays.hyp_of, arrays.n_hypotheses)


def posterior_update(spec: PriorSpec, h: History, grid: Optional[ObservationGrid] = None) -> PosteriorState:
    """
    Posterior over support models and hypotheses given a whole history.

    Parameters
    ----------
    spec : PriorSpec
        A prior with finite support.
    h : History
        The evidence; the first observation carries no information.
    grid : ObservationGrid, optional
        When given, scalar observations are replaced by their grid cell.

    Returns
    -------
    PosteriorState
        The normalised posterior.

    Raises
    ------
    NotFiniteSupportError
        If the prior is continuous.
    ZeroLikelihoodEverywhere
        If the history is impossible under every support model.
    """
    state = prior_state(spec)
    for s, (a, x) in enumerate(h.steps, start=1):
        state = posterior_step(state, spec, h.prefix(s), a, x, grid)
    return state


def posterior_predictive(spec: PriorSpec, h: History, a: Action, grid: ObservationGrid) -> np.ndarray:
    """Predictive probability of each grid cell for the next observation after query ``a``."""
    state = posterior_update(spec, h, grid)
    table = cell_likelihoods(spec, grid)
    return state.model_weights @ table[:, a, :]


def map_hypothesis(p: PosteriorState) -> Tuple[Hypothesis, float]:
    """Most probable hypothesis, lowest index on ties, and its probability."""
    best = int(np.argmax(p.hyp_probs))
    return best, float(p.hyp_probs[best])


class PosteriorInference:
    """Exact posterior exposed through the same ``predict_proba`` interface as the learned inference network."""

    def __init__(self, spec: PriorSpec, grid: Optional[ObservationGrid] = None) -> None:
        self.spec = spec
        self.grid = grid
        self.n_hypotheses = spec.n_hypotheses

    def state(self, history: History) -> PosteriorState:
        return posterior_update(self.spec, history, self.grid)

    def predict_proba(self, history: History) -> np.ndarray:
        return self.state(history).hyp_probs


def discretize_prior(
    spec: PriorSpec, grid_per_dim: int, rng: RandomSource, method: str = "iid"
) -> PriorSpec:
    """
    Replace a continuous prior by a finite one with uniform weights.

    Parameters
    ----------
    spec : PriorSpec
        A continuous Gaussian min-gap, deterministic or magic-action prior.
    grid_per_dim : int
        Lattice points per free mean; for ``method="iid"`` the number of draws is
        ``min(grid_per_dim ** dims, MAX_DISCRETE_MODELS)``.
    rng : RandomSource
        Stream for the i.i.d. draws.
    method : str
        ``"iid"`` (default) or ``"lattice"``.

    Returns
    -------
    PriorSpec
        The same prior with a finite support of invariant-respecting models.

    Raises
    ------
    GridTooCoarse
        If fewer than two models survive.
    """
    supported = (EnvFamily.GAUSSIAN_MIN_GAP, EnvFamily.DETERMINISTIC, EnvFamily.MAGIC_ACTION)
    if spec.family not in supported:
        raise UnsupportedFamilyError(spec.family.value, "discretize_prior")
    if grid_per_dim < 1:
        raise GridTooCoarse(0)
    free_dims = spec.k - 1 if spec.family == EnvFamily.MAGIC_ACTION else spec.k

    if method == "iid":
        n_draws = int(min(grid_per_dim**free_dims, MAX_DISCRETE_MODELS))
        models = [sample_env(spec.model_copy(update={"support": None, "weights": None}), rng) for _ in range(n_draws)]
    elif method == "lattice":
        if grid_per_dim**free_dims > MAX_DISCRETE_MODELS:
            raise ValueError(
                f"Lattice of {grid_per_dim}^{free_dims} points exceeds the cap of {MAX_DISCRETE_MODELS:,} models"
            )
        models = _lattice_models(spec, grid_per_dim, free_dims)
    else:
        raise ValueError(f"Unknown discretization method '{method}'")

    if len(models) < 2:
        raise GridTooCoarse(len(models))
    return spec.with_support(models)


def _lattice_models(spec: PriorSpec, grid_per_dim: int, free_dims: int) -> list:
    low, high = spec.mean_bounds
    axis = np.linspace(low, high, grid_per_dim)
    models = []
    for point in itertools.product(axis, repeat=free_dims):
        point = np.asarray(point)
        top_two = np.sort(point)[-2:]
        if top_two[1] == top_two[0]:
            continue
        if spec.family == EnvFamily.GAUSSIAN_MIN_GAP and top_two[1] - top_two[0] < spec.min_gap - 1e-12:
            continue
        if spec.family == EnvFamily.MAGIC_ACTION:
            means = np.concatenate([[magic_phi(1 + int(np.argmax(point)), spec.k)], point])
            noise = np.full(spec.k, spec.regular_sigma)
            noise[0] = spec.sigma_magic
            models.append(EnvModel.bandit(means, noise, spec.family, chain=(0,)))
        else:
            models.append(EnvModel.bandit(point, spec.regular_sigma, spec.family))
    return models
