"""
Meta-training loop: sample environments from the prior, roll out the current Q network, store partial
trajectories and fit the inference and Q networks against periodically refreshed target copies.

In fixed-confidence mode a per-query cost ``c = 1 / lambda`` is adjusted after every epoch from fresh greedy
evaluation rollouts so that the learned policy's correctness settles at ``1 - delta``.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from pure_explorer.cert import SeqTestState, hoeffding_lower, seq_observe
from pure_explorer.config import CHECKPOINT_FILE_NAME, CONFIDENCE_LEVEL, METRICS_FILE_NAME
from pure_explorer.core import (
    Action,
    EpisodeMode,
    FixedConfidence,
    History,
    Hypothesis,
    Policy,
    RandomSource,
    rollout,
)
from pure_explorer.envs import PriorSpec, sample_env
from pure_explorer.learner.buffer import ReplayBuffer, transitions_from_history
from pure_explorer.learner.losses import cost_update, inference_loss, q_loss_fixed_budget, q_loss_fixed_confidence
from pure_explorer.learner.model import InferenceNet, QNet, TokenEncoder
from pure_explorer.learner.optim import Adam
from pure_explorer.schemas.experiment_schema import ModeConfig
from pure_explorer.schemas.training_schema import TrainingConfig
from pure_explorer.utils.exceptions import CheckpointMissingError, DivergenceDetected

logger = logging.getLogger(__name__)

_NETS = ("infer", "q", "infer_target", "q_target")


class LearnedPolicy(Policy):
    """
    Greedy policy of a Q network with the inference network as recommendation rule.

    With ``epsilon > 0`` a uniformly random query replaces the greedy action with that probability; exploration
    never picks the stop action.
    """

    def __init__(self, q: QNet, infer: InferenceNet, epsilon: float = 0.0) -> None:
        self.q = q
        self.infer = infer
        self.epsilon = epsilon

    def act(self, history: History, rng: RandomSource) -> Action:
        if self.epsilon > 0.0 and rng.random() < self.epsilon:
            return int(rng.integers(history.n_arms))
        return int(np.argmax(self.q.q_values(history)))

    def recommend(self, history: History) -> Hypothesis:
        return int(np.argmax(self.infer.predict_proba(history)))


@dataclass
class EpochMetrics:
    epoch: int
    inference_loss: float
    q_loss: float
    p_hat: float
    cost: float
    epsilon: float
    eval_tau: float
    certified: bool


@dataclass
class LearnerState:  # pylint: disable=too-many-instance-attributes
    """Networks, target copies, optimizer moments, cost and the training log."""

    spec: PriorSpec
    mode: EpisodeMode
    config: TrainingConfig
    infer: InferenceNet
    q: QNet
    infer_target: InferenceNet
    q_target: QNet
    infer_opt: Adam
    q_opt: Adam
    rng: RandomSource
    cost: float
    epoch: int = 0
    steps: int = 0
    metrics: List[EpochMetrics] = field(default_factory=list)
    cert: Optional[SeqTestState] = None

    @property
    def lam(self) -> float:
        return 1.0 / self.cost

    @property
    def certified_at(self) -> Optional[int]:
        return None if self.cert is None else self.cert.triggered_at

    def policy(self, epsilon: float = 0.0) -> LearnedPolicy:
        return LearnedPolicy(self.q, self.infer, epsilon)


def build_state(spec: PriorSpec, mode: EpisodeMode, config: TrainingConfig, rng: RandomSource) -> LearnerState:
    """Freshly initialised learner for ``spec`` under ``mode``."""
    model_config = config.model
    if model_config.max_len < mode.history_cap:
        model_config = model_config.model_copy(update={"max_len": mode.history_cap})
    encoder = TokenEncoder(spec.n_arms, spec.obs_dim)
    infer = InferenceNet.build(encoder, spec.n_hypotheses, model_config, rng.child(0))
    q = QNet.build(encoder, mode.allows_stop, model_config, rng.child(1))
    adam = dict(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps, clip_norm=config.clip_norm)
    cert = SeqTestState(config.eval_rollouts, config.delta_prime, config.eta) if config.certify else None
    return LearnerState(
        spec=spec,
        mode=mode,
        config=config,
        infer=infer,
        q=q,
        infer_target=infer.clone(),
        q_target=q.clone(),
        infer_opt=Adam(infer.params, **adam),
        q_opt=Adam(q.params, **adam),
        rng=rng,
        cost=config.initial_cost,
        cert=cert,
    )


def evaluate_policy(
    spec: PriorSpec, mode: EpisodeMode, policy: Policy, n: int, rng: RandomSource
) -> Tuple[List[bool], List[int]]:
    """Correctness and stopping time (number of queries) of ``n`` rollouts on fresh environments."""
    outcomes, taus = [], []
    for i in range(n):
        r = rng.child(i)
        env = sample_env(spec, r.child(0))
        result = rollout(env, policy, mode, r.child(1))
        outcomes.append(policy.recommend(result.history) == result.hypothesis)
        taus.append(len(result.history.steps))
    return outcomes, taus


def _gradient_step(state: LearnerState, buffer: ReplayBuffer, rng: RandomSource) -> Tuple[float, float]:
    cfg = state.config
    batch = buffer.sample(cfg.batch_size, rng.child(0))
    loss_i, grads_i = inference_loss(batch, state.infer, training=True, rng=rng.child(1))
    common = dict(gamma=cfg.gamma, log_reward=cfg.log_reward, training=True, rng=rng.child(2))
    if state.mode.allows_stop:
        loss_q, grads_q = q_loss_fixed_confidence(
            batch, state.q, state.q_target, state.infer_target, state.cost, **common
        )
    else:
        loss_q, grads_q = q_loss_fixed_budget(batch, state.q, state.q_target, state.infer_target, **common)
    if not (np.isfinite(loss_i) and np.isfinite(loss_q)):
        raise DivergenceDetected(state.epoch, {"inference_loss": loss_i, "q_loss": loss_q, "cost": state.cost})

    state.infer_opt.step(grads_i)
    state.q_opt.step(grads_q)
    state.steps += 1
    if state.steps % cfg.target_period_infer == 0:
        state.infer_target = state.infer.clone()
    if state.steps % cfg.target_period_q == 0:
        state.q_target = state.q.clone()
    return loss_i, loss_q


def train(
    spec: PriorSpec,
    mode: EpisodeMode,
    config: TrainingConfig,
    rng: Optional[RandomSource] = None,
    progress: bool = True,
    output_dir: Optional[Path] = None,
    state: Optional[LearnerState] = None,
) -> LearnerState:
    """
    Run the meta-training loop.

    Parameters
    ----------
    spec : PriorSpec
        Prior over environments.
    mode : EpisodeMode
        Fixed budget or fixed confidence.
    config : TrainingConfig
        Hyperparameters.
    rng : RandomSource, optional
        Master stream (default seed 0); every epoch, episode and gradient step uses a child of it.
    progress : bool
        Show a tqdm progress bar.
    output_dir : Path, optional
        When given, the checkpoint and the metrics CSV are written there at the end.
    state : LearnerState, optional
        Resume from this state instead of initialising a new one. The replay buffer starts empty.

    Returns
    -------
    LearnerState
        Final networks, cost and per-epoch metrics.

    Raises
    ------
    DivergenceDetected
        If a loss becomes NaN or infinite.
    """
    rng = rng or RandomSource(0)
    state = state or build_state(spec, mode, config, rng)
    if config.epsilon_start > 0.0:
        logger.info(
            "Exploring epsilon-greedy, epsilon annealed from %.3f to %.3f", config.epsilon_start, config.epsilon_final
        )
    buffer = ReplayBuffer(config.buffer_capacity)
    base = state.rng.child(2)

    bar = tqdm(range(state.epoch, config.epochs), desc="train", disable=not progress)
    for epoch in bar:
        ep_rng = base.child(epoch)
        epsilon = config.epsilon(epoch)
        explorer = state.policy(epsilon)
        for e in range(config.episodes_per_epoch):
            episode_rng = ep_rng.child(0, e)
            result = rollout(sample_env(spec, episode_rng.child(0)), explorer, mode, episode_rng.child(1))
            buffer.extend(transitions_from_history(result, mode))

        losses = [_gradient_step(state, buffer, ep_rng.child(1, g)) for g in range(config.gradient_steps)]
        loss_i, loss_q = (float(np.mean(v)) for v in zip(*losses))

        outcomes, taus = evaluate_policy(spec, mode, state.policy(), config.eval_rollouts, ep_rng.child(2))
        p_hat = float(np.mean(outcomes))
        if isinstance(mode, FixedConfidence):
            state.cost = cost_update(state.cost, mode.delta, outcomes, config.cost_step)
        if state.cert is not None:
            state.cert, _ = seq_observe(state.cert, p_hat)

        state.epoch = epoch + 1
        certified = state.certified_at is not None
        state.metrics.append(
            EpochMetrics(epoch, loss_i, loss_q, p_hat, state.cost, epsilon, float(np.mean(taus)), certified)
        )
        bar.set_postfix(p_hat=f"{p_hat:.3f}", cost=f"{state.cost:.4f}", tau=f"{np.mean(taus):.2f}")
        logger.debug(
            "epoch %d: inference loss %.4f, q loss %.4f, p_hat %.3f, cost %.4f",
            epoch,
            loss_i,
            loss_q,
            p_hat,
            state.cost,
        )
        if certified:
            logger.info("Sequential test triggered at epoch %d; freezing the policy", state.certified_at)
            break

    logger.info("Training finished after %d epochs and %d gradient steps", state.epoch, state.steps)
    if output_dir is not None:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(state, output_dir / CHECKPOINT_FILE_NAME)
        write_metrics(state.metrics, output_dir / METRICS_FILE_NAME)
    return state


def final_certificate(
    state: LearnerState, n: int, rng: RandomSource, confidence: float = CONFIDENCE_LEVEL
) -> Dict[str, float]:
    """Correctness of ``n`` fresh greedy rollouts with a one-sided Hoeffding lower bound."""
    outcomes, taus = evaluate_policy(state.spec, state.mode, state.policy(), n, rng)
    successes = int(np.sum(outcomes))
    return {
        "correctness": successes / n,
        "lower_bound": hoeffding_lower(successes, n, confidence),
        "mean_tau": float(np.mean(taus)),
        "max_tau": float(np.max(taus)),
    }


# Persistence


def write_metrics(metrics: Sequence[EpochMetrics], path: Path) -> None:
    names = list(EpochMetrics.__dataclass_fields__)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=names)
        writer.writeheader()
        for m in metrics:
            writer.writerow(asdict(m))


def read_metrics(path: Path) -> List[EpochMetrics]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Metrics log not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    return [
        EpochMetrics(
            epoch=int(r["epoch"]),
            inference_loss=float(r["inference_loss"]),
            q_loss=float(r["q_loss"]),
            p_hat=float(r["p_hat"]),
            cost=float(r["cost"]),
            epsilon=float(r["epsilon"]),
            eval_tau=float(r["eval_tau"]),
            certified=r["certified"] == "True",
        )
        for r in rows
    ]


def _mode_config(mode: EpisodeMode) -> ModeConfig:
    if isinstance(mode, FixedConfidence):
        return ModeConfig.confidence(mode.delta, mode.n_max)
    return ModeConfig.budget(mode.n)


def save_checkpoint(state: LearnerState, path: Path) -> None:
    """Write networks, target copies, optimizer moments, cost and metadata to one ``.npz`` archive."""
    arrays: Dict[str, np.ndarray] = {}
    for prefix in _NETS:
        for name, value in getattr(state, prefix).params.items():
            arrays[f"{prefix}/{name}"] = value
    for prefix, opt in (("opt_infer", state.infer_opt), ("opt_q", state.q_opt)):
        for name, value in opt.state_dict().items():
            arrays[f"{prefix}/{name}"] = value
    arrays["cost"] = np.array(state.cost)

    seq = state.rng.seed_sequence
    metadata = {
        "prior_hash": state.spec.spec_hash(),
        "mode": _mode_config(state.mode).model_dump(mode="json"),
        "training": state.config.model_dump(mode="json"),
        "epoch": state.epoch,
        "steps": state.steps,
        "rng": {"entropy": str(seq.entropy), "spawn_key": list(seq.spawn_key)},
        "cert": None if state.cert is None else asdict(state.cert),
    }
    arrays["metadata"] = np.array(json.dumps(metadata))
    np.savez(path, **arrays)
    logger.info("Checkpoint saved to %s", path)


def load_checkpoint(path: Path, spec: PriorSpec) -> LearnerState:
    """
    Restore a :class:`LearnerState` written by :func:`save_checkpoint`.

    Raises
    ------
    CheckpointMissingError
        If ``path`` does not exist.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointMissingError(str(path))
    with np.load(path) as archive:
        data = {name: archive[name] for name in archive.files}
    metadata = json.loads(str(data.pop("metadata")))
    if metadata["prior_hash"] != spec.spec_hash():
        warnings.warn(f"Checkpoint {path} was trained on a different prior", UserWarning)

    mode = ModeConfig.model_validate(metadata["mode"]).to_mode()
    config = TrainingConfig.model_validate(metadata["training"])
    seq = np.random.SeedSequence(int(metadata["rng"]["entropy"]), spawn_key=tuple(metadata["rng"]["spawn_key"]))
    state = build_state(spec, mode, config, RandomSource(seq))

    for prefix in _NETS:
        net = getattr(state, prefix)
        for name in net.params:
            net.params[name][...] = data[f"{prefix}/{name}"]
    for prefix, opt in (("opt_infer", state.infer_opt), ("opt_q", state.q_opt)):
        opt.load_state_dict({key[len(prefix) + 1 :]: v for key, v in data.items() if key.startswith(prefix + "/")})
    state.cost = float(data["cost"])
    state.epoch = int(metadata["epoch"])
    state.steps = int(metadata["steps"])
    if metadata["cert"] is not None:
        state.cert = SeqTestState(**metadata["cert"])
    logger.info("Checkpoint loaded from %s (epoch %d)", path, state.epoch)
    return state

