"""Tests for characteristic times and sample-complexity bounds."""

import csv
import math
from pathlib import Path

import numpy as np
import pytest

from pure_explorer.bounds import (
    bound_table,
    characteristic_time_gaussian,
    kl_bernoulli,
    magic_char_time,
    magic_objective,
    magic_upper_corollary,
    min_gap_bounds,
    multi_magic_closed_form,
    multi_magic_recursion,
    multi_magic_upper,
    write_bound_csv,
)
from pure_explorer.core import RandomSource
from pure_explorer.utils.exceptions import DomainError, GapViolationError


def test_kl_bernoulli_values() -> None:
    assert kl_bernoulli(0.5, 0.5) == 0.0
    assert kl_bernoulli(0.9, 0.1) == pytest.approx(0.8 * math.log(9.0))


@pytest.mark.parametrize("x, y", [pytest.param(0.0, 0.5, id="x-zero"), pytest.param(0.5, 1.0, id="y-one")])
def test_kl_bernoulli_domain(x: float, y: float) -> None:
    with pytest.raises(DomainError):
        kl_bernoulli(x, y)


def test_min_gap_bounds_are_ordered() -> None:
    """
    Test the minimum-gap bounds.

    Given means whose top-two gap exceeds the declared minimum:
    When computing both bounds,
    Then the lower bound does not exceed the upper one and the witness allocation sums to one.
    """
    result = min_gap_bounds([1.0, 0.5, 0.0], 1.0, 0.4, 0.05)

    assert 0.0 < result.lower <= result.upper
    assert result.witness_weights.sum() == pytest.approx(1.0)


def test_min_gap_bounds_reject_violation() -> None:
    with pytest.raises(GapViolationError):
        min_gap_bounds([1.0, 0.9, 0.0], 1.0, 0.4, 0.05)


def test_characteristic_time_two_arms() -> None:
    """
    Test the two-armed Gaussian characteristic time against its closed form ``8 sigma^2 / gap^2``.
    """
    result = characteristic_time_gaussian([1.0, 0.0], 1.0)

    assert result.characteristic_time == pytest.approx(8.0)
    assert np.allclose(result.witness_weights, [0.5, 0.5])


def test_magic_char_time_low_magic_noise_prefers_magic_arm() -> None:
    """
    Test that a reliable magic arm absorbs the allocation.

    Given means (0.5, 1.5, 1.0) with the magic arm pointing at arm 1 and little magic noise:
    When solving for the characteristic time,
    Then the optimal allocation puts (almost) all weight on the magic arm.
    """
    result = magic_char_time([0.5, 1.5, 1.0], 1.0, 0.3, rng=RandomSource(0))

    assert result.witness_weights[0] == pytest.approx(1.0, abs=1e-3)
    assert result.characteristic_time > 0.0


def test_magic_char_time_high_magic_noise_ignores_magic_arm() -> None:
    result = magic_char_time([0.5, 1.5, 1.0], 1.0, 1.5, rng=RandomSource(0))

    assert result.witness_weights[0] == pytest.approx(0.0, abs=1e-3)


def test_magic_char_time_attains_its_objective() -> None:
    mu, sigma, sigma_m = [0.5, 1.5, 1.0], 1.0, 0.6
    result = magic_char_time(mu, sigma, sigma_m, rng=RandomSource(1))

    value = magic_objective(result.witness_weights, mu, sigma, sigma_m)
    uniform = magic_objective(np.full(3, 1.0 / 3.0), mu, sigma, sigma_m)

    assert 1.0 / value == pytest.approx(result.characteristic_time)
    assert value >= uniform - 1e-9


def test_magic_objective_with_increasing_encoding() -> None:
    """
    Test the confusing sets under an increasing encoding ``phi(i) = i / K``.

    Given K = 4, means (0.75, 0.6, 0.8, 0.55) so that the magic arm points at arm 2, and a very noisy magic arm:
    When evaluating the uniform allocation,
    Then the cheapest alternative is arm 1 confused with arm 2 (both above ``phi(2) = 0.5``), plus the magic term.
    """
    mu = [0.75, 0.6, 0.8, 0.55]
    sigma_m = 100.0

    value = magic_objective(np.full(4, 0.25), mu, 1.0, sigma_m, phi=lambda i: i / 4)

    regular = 0.25 * (0.1**2 + 0.1**2) / 2.0
    magic = 0.25 * 0.25**2 / (2.0 * sigma_m**2)
    assert value == pytest.approx(regular + magic, rel=1e-9)


def test_magic_char_time_noiseless_magic_arm() -> None:
    result = magic_char_time([0.5, 1.5, 1.0], 1.0, 0.0)

    assert result.characteristic_time == 0.0
    assert list(result.witness_weights) == [1.0, 0.0, 0.0]


def test_magic_char_time_scales_with_confidence() -> None:
    result = magic_char_time([0.5, 1.5, 1.0], 1.0, 0.3, delta=0.05, rng=RandomSource(0))

    assert result.lower == pytest.approx(result.characteristic_time * kl_bernoulli(0.95, 0.05))


def test_magic_upper_corollary() -> None:
    assert magic_upper_corollary(2, 1.0, 5) == pytest.approx(2.0 * 36.0)
    with pytest.raises(DomainError):
        magic_upper_corollary(1, 1.0, 5)


@pytest.mark.parametrize("n", range(1, 10))
def test_multi_magic_closed_form_matches_recursion(n: int) -> None:
    assert multi_magic_closed_form(10, n) == pytest.approx(multi_magic_recursion(10, n)[-1])


def test_multi_magic_single_action_is_one_query() -> None:
    assert multi_magic_upper(10, 1) == 1.0


def test_multi_magic_rejects_bad_chain_length() -> None:
    with pytest.raises(DomainError):
        multi_magic_recursion(5, 5)


def test_bound_table_and_csv(tmp_path: Path) -> None:
    """
    Test the bound table written to CSV.

    Given K = 10 and chain lengths 1 to 9:
    When tabulating and writing the bounds,
    Then there are nine rows whose upper bound never exceeds the chain length.
    """
    rows = bound_table(10, range(1, 10))
    path = write_bound_csv(rows, tmp_path / "bounds.csv")

    with path.open(newline="", encoding="utf-8") as f:
        written = list(csv.DictReader(f))

    assert len(written) == 9
    assert [int(r["n"]) for r in written] == list(range(1, 10))
    assert all(r["upper"] <= r["n"] for r in rows)
