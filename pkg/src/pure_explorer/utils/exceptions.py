"""Custom exceptions for the pure_explorer package."""

from typing import Optional, Sequence


class PureExplorerError(Exception):
    """Root of the runtime errors raised by the package."""


# Core


class PolicyEmittedStopInFixedBudget(ValueError):
    """
    Exception raised when a policy requests the stop action during a fixed-budget episode.

    Parameters
    ----------
    t : int
        Length of the history at which the stop was requested.
    """

    def __init__(self, t: int) -> None:
        super().__init__(
            f"Policy emitted the stop action at t={t}, but stopping is only valid in fixed-confidence mode."
        )


class HorizonCapExceeded(PureExplorerError):
    """Exception raised when a rollout grows a history beyond its horizon cap."""

    def __init__(self, t: int, n_max: int) -> None:
        super().__init__(f"History length {t} exceeds the horizon cap {n_max}.")


class AppendAfterStopError(ValueError):
    """Exception raised when a step is appended to a history that already ended with the stop action."""

    def __init__(self) -> None:
        super().__init__("Cannot append to a history that already ended with the stop action.")


class InvalidActionError(ValueError):
    """Exception raised when an action index lies outside the action set."""

    def __init__(self, action: int, n_actions: int) -> None:
        super().__init__(f"Action {action} is outside the valid range [0, {n_actions}].")


class InvalidEpisodeModeError(ValueError):
    """Exception raised when an episode mode is built with out-of-range parameters."""

    def __init__(self, message: str) -> None:
        super().__init__(message)


# Environments


class RejectionBudgetExhausted(PureExplorerError):
    """
    Exception raised when rejection sampling cannot satisfy the prior's constraints.

    Parameters
    ----------
    attempts : int
        Number of attempts made before giving up.
    reason : str
        The constraint that could not be met.
    """

    def __init__(self, attempts: int, reason: str) -> None:
        super().__init__(f"Rejection sampling failed after {attempts:,} attempts: {reason}.")


class BadGraphParams(ValueError):
    """Exception raised when feedback-graph parameters are not probabilities or the graph is too small."""

    def __init__(self, message: str) -> None:
        super().__init__(message)


class TieAtOptimum(ValueError):
    """Exception raised when an environment has two exactly equal best means."""

    def __init__(self, indices: Sequence[int]) -> None:
        super().__init__(f"Environment has a tie at the optimum between arms {list(indices)}.")


class UnsupportedFamilyError(ValueError):
    """Exception raised when an operation does not support an environment family."""

    def __init__(self, family: str, operation: str) -> None:
        super().__init__(f"Environment family '{family}' is not supported by {operation}.")


class UnknownPresetError(ValueError):
    """Exception raised when a named prior preset does not exist."""

    def __init__(self, name: str, known: Sequence[str]) -> None:
        super().__init__(f"Unknown prior preset '{name}'. Known presets: {', '.join(sorted(known))}.")


# Posterior


class ZeroLikelihoodEverywhere(PureExplorerError):
    """Exception raised when a history is impossible under every model of a finite prior."""

    def __init__(self, t: int) -> None:
        super().__init__(f"History of length {t} has zero likelihood under every model in the prior support.")


class EmptyGridError(ValueError):
    """Exception raised when an observation grid has no cells."""

    def __init__(self) -> None:
        super().__init__("Observation grid must contain at least one cell.")


class GridTooCoarse(ValueError):
    """Exception raised when gridding a continuous prior leaves fewer than two models."""

    def __init__(self, survivors: int) -> None:
        super().__init__(f"Only {survivors} model(s) survived gridding; at least 2 are required.")


class NotFiniteSupportError(ValueError):
    """Exception raised when an exact computation receives a prior without finite support."""

    def __init__(self) -> None:
        super().__init__("This operation requires a prior with finite support; use discretize_prior first.")


# Exact solvers


class StateSpaceTooLarge(PureExplorerError):
    """Exception raised when backward induction would exceed the node guard."""

    def __init__(self, nodes: float, limit: int) -> None:
        super().__init__(f"History tree has up to {nodes:.3g} nodes, above the guard of {limit:,}.")


class InfeasibleAtHorizon(PureExplorerError):
    """Exception raised when no stop bonus reaches the requested correctness within the horizon cap."""

    def __init__(self, correctness: float, target: float, n_max: int) -> None:
        super().__init__(
            f"Best achievable correctness {correctness:.6f} is below the target {target:.6f} within N_max={n_max}."
        )


# Learner


class DivergenceDetected(PureExplorerError):
    """Exception raised when a training loss becomes NaN or infinite."""

    def __init__(self, epoch: int, losses: dict) -> None:
        details = ", ".join(f"{name}={value!r}" for name, value in losses.items())
        super().__init__(f"Training diverged at epoch {epoch} ({details}).")


class SingularRegression(RuntimeWarning):
    """Warning emitted when a fitted-Q design matrix is rank deficient and a ridge term is added."""


class CheckpointMissingError(FileNotFoundError):
    """Exception raised when a learned policy references a checkpoint that does not exist."""

    def __init__(self, path: str) -> None:
        super().__init__(f"Checkpoint not found: {path}")


class EmptyBufferError(ValueError):
    """Exception raised when sampling from an empty replay buffer."""

    def __init__(self) -> None:
        super().__init__("Cannot sample from an empty replay buffer.")


# Baselines


class DegenerateGapsError(ValueError):
    """Exception raised when all empirical means are equal and no allocation is defined."""

    def __init__(self) -> None:
        super().__init__("All arm means are equal; the allocation is undefined.")


class UnpulledArmError(ValueError):
    """Exception raised when a statistic needs every arm to have at least one sample."""

    def __init__(self, arms: Sequence[int]) -> None:
        super().__init__(f"Arms {list(arms)} have not been pulled yet.")


class HypothesisActionMismatch(ValueError):
    """Exception raised when a posterior-greedy rule is used where hypotheses are not actions."""

    def __init__(self, n_hypotheses: int, n_arms: int) -> None:
        super().__init__(f"Posterior-greedy acting needs |H| == K, got |H|={n_hypotheses} and K={n_arms}.")


# Bounds


class DomainError(ValueError):
    """Exception raised when a function is evaluated outside its domain."""

    def __init__(self, message: str) -> None:
        super().__init__(message)


class GapViolationError(ValueError):
    """Exception raised when a bandit model violates its declared minimum gap."""

    def __init__(self, gap: float, delta0: float) -> None:
        super().__init__(f"Minimum gap {gap:.6g} is below the declared bound {delta0:.6g}.")


class NonConvergenceWarning(RuntimeWarning):
    """Warning emitted when a bound optimizer exhausts its restarts; the best value found is returned."""


# Certification and statistics


class InvalidSampleSizeError(ValueError):
    """Exception raised when a confidence bound is requested from no samples."""

    def __init__(self, n: int) -> None:
        super().__init__(f"Sample size must be positive, got {n}.")


class EmptyLevelError(ValueError):
    """Exception raised when a level of nested results has no members."""

    def __init__(self, level: str, key: Optional[str] = None) -> None:
        where = f" under {key}" if key is not None else ""
        super().__init__(f"Nested results have an empty {level} level{where}.")


# Harness


class UnknownAlgorithmError(ValueError):
    """Exception raised when an experiment references an algorithm that is not registered."""

    def __init__(self, name: str, known: Sequence[str]) -> None:
        super().__init__(f"Unknown algorithm '{name}'. Registered algorithms: {', '.join(sorted(known))}.")


class InvalidConfigError(ValueError):
    """Exception raised when a configuration file contains invalid values."""

    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"Invalid configuration in {path}: {message}")


class ConfigHashMismatchError(ValueError):
    """Exception raised when result files produced under different configurations are mixed."""

    def __init__(self, expected: str, found: str, source: str) -> None:
        super().__init__(f"Config hash mismatch in {source}: expected {expected[:12]}, found {found[:12]}.")


class DuplicateRunError(ValueError):
    """Exception raised when a report is given the same run configuration twice."""

    def __init__(self, config_hash: str, first: str, second: str) -> None:
        super().__init__(f"Runs {first} and {second} share config hash {config_hash[:12]}; pass each run once.")
