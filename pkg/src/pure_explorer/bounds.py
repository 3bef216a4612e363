"""
Characteristic times and sample-complexity bounds.

Every bound is expressed in queries: a characteristic time ``T*`` multiplied by ``kl(1 - delta, delta)`` when a
confidence level is given.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.special import softmax, xlogy

from pure_explorer.baselines import tas_allocation
from pure_explorer.core import RandomSource
from pure_explorer.utils.exceptions import DomainError, GapViolationError, NonConvergenceWarning

_MAGIC_RESTARTS = 20
_MAGIC_STEPS = 400
_SNAP = 1e-6


@dataclass
class BoundResult:
    """Lower and upper query bounds, with the allocation that witnesses them."""

    lower: Optional[float] = None
    upper: Optional[float] = None
    characteristic_time: Optional[float] = None
    witness_weights: Optional[np.ndarray] = None
    components: Dict[str, np.ndarray] = field(default_factory=dict)


def kl_bernoulli(x: float, y: float) -> float:
    """
    Bernoulli relative entropy ``kl(x, y)``.

    Raises
    ------
    DomainError
        If ``x`` or ``y`` lies outside the open unit interval.
    """
    if not (0.0 < x < 1.0 and 0.0 < y < 1.0):
        raise DomainError(f"kl_bernoulli needs x, y in (0, 1), got x={x}, y={y}")
    return float(xlogy(x, x / y) + xlogy(1.0 - x, (1.0 - x) / (1.0 - y)))


def _confidence_factor(delta: Optional[float]) -> float:
    return 1.0 if delta is None else kl_bernoulli(1.0 - delta, delta)


def min_gap_bounds(mu: Sequence[float], sigma: float, delta0: float, delta: float) -> BoundResult:
    """
    Lower and upper sample-complexity bounds for Gaussian bandits whose top-two gap is at least ``delta0``.

    The upper bound is achieved by the static allocation proportional to ``1 / (gap_a + delta0)^2``.

    Raises
    ------
    GapViolationError
        If ``mu`` violates the declared minimum gap.
    """
    mu = np.asarray(mu, dtype=float)
    best = int(np.argmax(mu))
    gaps = mu[best] - mu
    others = np.delete(gaps, best)
    if others.min() < delta0 - 1e-12:
        raise GapViolationError(float(others.min()), delta0)

    scale = 2.0 * sigma**2 * kl_bernoulli(1.0 - delta, delta)
    hardness = np.sum(1.0 / others**2)
    lower = scale / max(delta0**2, 1.0 / hardness)
    inverse_sq = 1.0 / (gaps + delta0) ** 2
    upper = scale * 2.0 * inverse_sq.sum()
    return BoundResult(
        lower=float(lower),
        upper=float(upper),
        witness_weights=inverse_sq / inverse_sq.sum(),
        components={"gaps": gaps, "upper_terms": 2.0 * scale * inverse_sq},
    )


def characteristic_time_gaussian(mu: Sequence[float], sigma: float, delta: Optional[float] = None) -> BoundResult:
    """Classical best-arm characteristic time for unit-structure Gaussian bandits, via the optimal allocation."""
    mu = np.asarray(mu, dtype=float)
    weights = tas_allocation(mu, sigma)
    best = int(np.argmax(mu))
    gaps = mu[best] - mu
    with np.errstate(divide="ignore", invalid="ignore"):
        costs = weights[best] * weights / (weights[best] + weights) * gaps**2 / (2.0 * sigma**2)
    inverse = float(np.min(np.delete(costs, best)))
    t_star = 1.0 / inverse
    return BoundResult(
        lower=t_star * _confidence_factor(delta),
        characteristic_time=t_star,
        witness_weights=weights,
        components={"costs": costs},
    )


# ----------------------------------------------------------------------------------------------------------------
# Single magic action
# ----------------------------------------------------------------------------------------------------------------


def _inverse_phi(x: float) -> float:
    return 1.0 / x


class _MagicProblem:
    """Inner minimisation of the magic-action characteristic time; arm 0 is the magic arm."""

    def __init__(self, mu: np.ndarray, sigma: float, sigma_m: float, phi: Callable[[float], float]) -> None:
        self.mu = mu
        self.sigma = sigma
        self.K = mu.size
        self.regular = np.arange(1, self.K)
        self.best = 1 + int(np.argmax(mu[1:]))
        phi_values = np.array([phi(i + 1) for i in range(self.K)], dtype=float)
        # Regular arms below phi(2) never enter a confusing set.
        self.floor = phi_values[1]
        self.alternatives = [a for a in self.regular if a != self.best]
        if sigma_m > 0.0:
            self.magic_gain = np.array(
                [(phi_values[self.best] - phi_values[a]) ** 2 / (2.0 * sigma_m**2) for a in self.alternatives]
            )
        else:
            self.magic_gain = np.full(len(self.alternatives), np.inf)
        self.above = {x: [b for b in self.regular if mu[b] >= mu[x]] for x in self.regular}

    def weighted_mean(self, omega: np.ndarray, members: Sequence[int]) -> float:
        members = list(members)
        w = omega[members]
        total = w.sum()
        if total <= 0.0:
            return float(self.mu[members].mean())
        return float(w @ self.mu[members] / total)

    def confusing_set(self, omega: np.ndarray, a: int) -> List[int]:
        members = {a}
        for b in self.regular:
            reference = self.weighted_mean(omega, set(self.above[b]) | {a})
            if self.mu[b] >= reference and self.mu[b] >= self.floor:
                members.add(int(b))
        return sorted(members)

    def costs(self, omega: np.ndarray) -> np.ndarray:
        """Cost of each alternative arm at allocation ``omega``."""
        out = np.empty(len(self.alternatives))
        for i, a in enumerate(self.alternatives):
            members = self.confusing_set(omega, a)
            m = self.weighted_mean(omega, members)
            regular = omega[members] @ (self.mu[members] - m) ** 2 / (2.0 * self.sigma**2)
            magic = omega[0] * self.magic_gain[i] if omega[0] > 0.0 else 0.0
            out[i] = magic + regular
        return out

    def gradients(self, omega: np.ndarray) -> np.ndarray:
        """Envelope gradients of each cost, one row per alternative arm."""
        grads = np.zeros((len(self.alternatives), self.K))
        for i, a in enumerate(self.alternatives):
            members = self.confusing_set(omega, a)
            m = self.weighted_mean(omega, members)
            grads[i, members] = (self.mu[members] - m) ** 2 / (2.0 * self.sigma**2)
            grads[i, 0] = self.magic_gain[i]
        return grads


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    cumulative = np.cumsum(u) - 1.0
    index = np.arange(1, v.size + 1)
    rho = np.nonzero(u - cumulative / index > 0)[0][-1]
    return np.maximum(v - cumulative[rho] / (rho + 1), 0.0)


def _snap(omega: np.ndarray) -> np.ndarray:
    omega = np.where(omega < _SNAP, 0.0, omega)
    return omega / omega.sum()


def magic_objective(
    omega: Sequence[float],
    mu: Sequence[float],
    sigma: float,
    sigma_m: float,
    phi: Callable[[float], float] = _inverse_phi,
) -> float:
    """Inverse characteristic time achieved by allocation ``omega``: the smallest cost over alternative arms."""
    problem = _MagicProblem(np.asarray(mu, dtype=float), sigma, sigma_m, phi)
    if not problem.alternatives:
        return np.inf
    return float(problem.costs(np.asarray(omega, dtype=float)).min())


def magic_char_time(
    mu: Sequence[float],
    sigma: float,
    sigma_m: float,
    phi: Callable[[float], float] = _inverse_phi,
    delta: Optional[float] = None,
    rng: Optional[RandomSource] = None,
) -> BoundResult:
    """
    Characteristic time of a single-magic-action bandit.

    Arm 0 is the magic arm and ``phi`` maps 1-based arm indices to magic means. The max-min over the simplex is
    solved by projected gradient ascent on a soft minimum whose temperature is annealed, restarted from 20
    Dirichlet draws plus the magic vertex and the uniform allocation, and polished with the exact minimum.

    Parameters
    ----------
    mu : Sequence[float]
        Means, ``mu[0] = phi(a* + 1)``.
    sigma, sigma_m : float
        Noise of the regular arms and of the magic arm.
    phi : Callable[[float], float]
        Encoding function, ``1 / x`` by default.
    delta : float, optional
        When given, ``lower`` is ``T* * kl(1 - delta, delta)``; otherwise it is ``T*``.
    rng : RandomSource, optional
        Stream for the restarts.

    Returns
    -------
    BoundResult
        ``characteristic_time`` and the allocation that attains it.
    """
    mu = np.asarray(mu, dtype=float)
    rng = rng or RandomSource(0)
    problem = _MagicProblem(mu, sigma, sigma_m, phi)
    K = mu.size
    if not problem.alternatives or sigma_m == 0.0:
        # Noiseless magic arm or no alternative: one magic pull settles the answer.
        witness = np.eye(K)[0]
        return BoundResult(lower=0.0, characteristic_time=0.0, witness_weights=witness)

    starts = [np.eye(K)[0], np.full(K, 1.0 / K)]
    starts += list(rng.generator.dirichlet(np.ones(K), size=_MAGIC_RESTARTS))

    best_value, best_omega = -np.inf, starts[0]
    for start in starts:
        omega = _ascend(problem, np.asarray(start, dtype=float))
        for candidate in (omega, _snap(omega)):
            value = float(problem.costs(candidate).min())
            if value > best_value + 1e-15:
                best_value, best_omega = value, candidate

    if not np.isfinite(best_value) or best_value <= 0.0:
        warnings.warn(
            f"Magic characteristic time did not converge after {len(starts)} restarts; best value {best_value}",
            NonConvergenceWarning,
        )
    t_star = 1.0 / best_value if best_value > 0.0 else np.inf
    return BoundResult(
        lower=t_star * _confidence_factor(delta),
        characteristic_time=t_star,
        witness_weights=best_omega,
        components={"costs": problem.costs(best_omega)},
    )


def _ascend(problem: _MagicProblem, omega: np.ndarray) -> np.ndarray:
    omega = _project_simplex(omega)
    scale = max(float(problem.costs(np.full(problem.K, 1.0 / problem.K)).max()), 1e-12)
    best, best_value = omega, float(problem.costs(omega).min())
    for step in range(1, _MAGIC_STEPS + 1):
        costs = problem.costs(omega)
        temperature = scale * 0.1 / step
        mix = softmax(-costs / temperature)
        grad = mix @ problem.gradients(omega)
        norm = np.abs(grad).max()
        if norm == 0.0:
            break
        omega = _project_simplex(omega + (0.5 / np.sqrt(step)) * grad / norm)
        value = float(problem.costs(omega).min())
        if value > best_value:
            best, best_value = omega, value
    return best


def magic_upper_corollary(a_star: int, sigma_m: float, K: int) -> float:
    """
    Closed-form upper bound on the magic characteristic time for ``phi(x) = 1 / x``.

    ``a_star`` is the 1-based index of the best arm, between 2 and ``K``.
    """
    if not 2 <= a_star <= K:
        raise DomainError(f"a* must lie in [2, {K}], got {a_star}")
    neighbour = a_star + 1 if a_star < K else a_star - 1
    return 2.0 * sigma_m**2 * (a_star * neighbour) ** 2


# ----------------------------------------------------------------------------------------------------------------
# Chains of magic actions
# ----------------------------------------------------------------------------------------------------------------


def _chain_terms(K: int, n: int, r: int):
    a = r / (n - 1 + r)
    b = 1.0 + (n - 1) / (n - 1 + r) * min((n - 2) / 2.0, r * (n - 1 + r) / (r + 1))
    return a, b


def multi_magic_recursion(K: int, n: int) -> np.ndarray:
    """Values ``V(0), ..., V(K - n)`` of the recursion ``V(r) = B(r) + A(r) V(r - 1)`` with ``V(0) = 0``."""
    if not 1 <= n <= K - 1:
        raise DomainError(f"Need 1 <= n <= K - 1, got n={n}, K={K}")
    values = np.zeros(K - n + 1)
    for r in range(1, K - n + 1):
        a, b = _chain_terms(K, n, r)
        values[r] = b + a * values[r - 1]
    return values


def multi_magic_closed_form(K: int, n: int) -> float:
    """Direct summation of the unrolled recursion."""
    if not 1 <= n <= K - 1:
        raise DomainError(f"Need 1 <= n <= K - 1, got n={n}, K={K}")
    R = K - n
    total = 0.0
    for j in range(1, R + 1):
        _, b = _chain_terms(K, n, j)
        product = np.prod([i / (n - 1 + i) for i in range(j + 1, R + 1)]) if j < R else 1.0
        total += product * b
    return float(total)


def multi_magic_upper(K: int, n: int) -> float:
    """Expected-query upper bound for a noiseless chain of ``n`` magic actions among ``K`` arms."""
    return float(min(n, multi_magic_recursion(K, n)[-1]))


def bound_table(K: int, n_values: Sequence[int]) -> List[Dict[str, float]]:
    """Rows ``(K, n, recursion, closed_form, upper)`` of the multi-magic bound for each chain length."""
    rows = []
    for n in n_values:
        rows.append(
            {
                "K": K,
                "n": n,
                "recursion": float(multi_magic_recursion(K, n)[-1]),
                "closed_form": multi_magic_closed_form(K, n),
                "upper": multi_magic_upper(K, n),
            }
        )
    return rows


def write_bound_csv(rows: Sequence[Dict[str, float]], path: Path) -> Path:
    """Write bound rows as a CSV with a header line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return path
