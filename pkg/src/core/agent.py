"""
CACRL Agent for the XR downlink scheduler.

Runs one policy iteration at a time: collect B slots under the current
policy (inferring the context and reshaping constraint costs), train the
critics, encoder and potentials on T_cri mini-batches, estimate the
policy gradients and take the CSSCA step on theta.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

from ..utils.config import ExperimentConfig
from ..utils.errors import ConfigurationError
from ..utils.performance import PerformanceProfiler
from .context import ContextEncoder, EncodedWindow, transition_row
from .critic import CriticBatch, EncoderBatch, encoder_update, td_critic_update
from .environment import Action, XRDownlinkEnv
from .estimators import (
    IterationBatch,
    ObservationTuple,
    StepSchedule,
    estimate_f_tilde,
    estimate_g_tilde,
    step_sizes,
    update_scalar_average,
)
from .networks import DualHeadNet, ParamVector
from .policy import ActionBounds, GaussianPolicy, action_features
from .shaping import reshape_costs, potential_update
from .surrogate import (
    FEASIBLE,
    OBJECTIVE,
    Infeasible,
    ThetaBox,
    build_surrogates,
    mix_theta,
    solve_objective_update,
)

logger = logging.getLogger(__name__)

PRETRAIN = "pretrain"
DEPLOY = "deploy"


class Variant(Enum):
    """Agent wiring: full CACRL, context only, or plain CSSCA."""

    CACRL = "cacrl"
    CACRL_MINUS = "cacrl-minus"
    CSSCA_CRL = "cssca-crl"

    @property
    def uses_context(self) -> bool:
        return self is not Variant.CSSCA_CRL

    @property
    def uses_shaping(self) -> bool:
        return self is Variant.CACRL


@dataclass
class RandomStreams:
    """Independent generators spawned from one seed."""

    env: np.random.Generator
    init: np.random.Generator
    policy: np.random.Generator
    noise: np.random.Generator
    successor: np.random.Generator
    potential: np.random.Generator
    evaluation: np.random.SeedSequence

    @classmethod
    def from_seed(cls, seed: int) -> "RandomStreams":
        children = np.random.SeedSequence(seed).spawn(7)
        gens = [np.random.default_rng(c) for c in children[:6]]
        return cls(*gens, evaluation=children[6])

    def evaluation_rng(self) -> np.random.Generator:
        """Fresh stream for the next evaluation pass."""
        return np.random.default_rng(self.evaluation.spawn(1)[0])


@dataclass
class IterationReport:
    """Everything one policy iteration produced, for metrics and logs."""

    iteration: int
    phase: str
    batch: IterationBatch
    branch: str
    dual_iterations: int
    max_violation: float
    f_hat: np.ndarray
    mu: float
    eta: float
    upsilon: float
    theta_checksum: str
    mean_kl: float
    mean_residuals: np.ndarray      # mean |delta_k|, k = 0..K
    mean_abs_shaping: np.ndarray    # mean |F_k|, k = 1..K
    mean_abs_z: float


@dataclass
class EvaluationResult:
    """Frozen-policy pass: deterministic mean actions, mean-mode context."""

    slots: int
    mean_power: float
    dropout_rates: np.ndarray
    dropped: np.ndarray
    resolved: np.ndarray
    max_dropout_rate: float

    @property
    def satisfied(self) -> bool:
        return bool(np.all(self.dropout_rates <= self.max_dropout_rate))


class CACRLAgent:
    """
    Context-aware constrained actor-critic.

    Critic k = 0 models the power cost and k = 1..K the per-user dropout
    constraints; the V heads of the constraint critics are the shaping
    potentials.
    """

    def __init__(
        self,
        config: ExperimentConfig,
        variant: Variant,
        env: XRDownlinkEnv,
        streams: RandomStreams,
    ):
        """
        Build networks and optimizer state.

        Args:
            config: Validated experiment configuration
            variant: Which inference and shaping paths are wired in
            env: Training environment (already owning its random stream)
            streams: Seeded random streams
        """
        self.config = config
        self.variant = variant
        self.env = env
        self.streams = streams

        K = config.num_users
        self.obs_dim = env.state_dim
        self.latent_dim = config.latent_dim if variant.uses_context else 0
        self.bounds = ActionBounds(K, config.p_max, config.eps_min, config.eps_max)
        state_dim = self.obs_dim + self.latent_dim

        self.policy = GaussianPolicy(
            state_dim, self.bounds, config.hidden_sizes, streams.init, config.init_scale
        )
        self.critics = [
            DualHeadNet(state_dim, self.bounds.dim, config.hidden_sizes, streams.init, config.init_scale)
            for _ in range(K + 1)
        ]
        self.encoder: Optional[ContextEncoder] = None
        self.window: Optional[EncodedWindow] = None
        if variant.uses_context:
            self.encoder = ContextEncoder(
                2 * self.obs_dim + self.bounds.dim,
                self.latent_dim,
                config.encoder_hidden_sizes,
                streams.init,
                config.init_scale,
                strict_kl=config.literal_rules,
            )
            self.window = EncodedWindow(self.encoder, config.context_size)

        self.schedule = StepSchedule.from_experiment(config)
        self.box = ThetaBox.symmetric(config.theta_bound, self.policy.theta.size)
        self.policy.set_theta(self.box.clip(self.policy.theta))

        self.f_hat = np.zeros(K + 1)
        self.g_hat = np.zeros((K + 1, self.policy.theta.size))
        self.iteration = 0
        self.profiler = PerformanceProfiler()

        self._obs: Optional[np.ndarray] = None
        self._current: Optional[tuple[np.ndarray, Optional[np.ndarray]]] = None

    @property
    def potentials(self) -> Optional[list[DualHeadNet]]:
        return self.critics[1:] if self.variant.uses_shaping else None

    def phase(self, i: int) -> str:
        return PRETRAIN if i <= self.config.pretrain_iterations else DEPLOY

    def named_params(self) -> dict[str, ParamVector]:
        params = dict(self.policy.named_params())
        for k, critic in enumerate(self.critics):
            params.update(critic.named_params(f"critic{k}"))
        if self.encoder is not None:
            params.update(self.encoder.named_params())
        return params

    # -- data collection -------------------------------------------------

    def _augment(self, obs: np.ndarray) -> tuple[np.ndarray, Optional[np.ndarray]]:
        if self.window is None:
            return obs, None
        ctx = self.window.infer(self.streams.noise, "sample")
        return np.concatenate([obs, ctx.z]), ctx.xi

    def collect(self) -> IterationBatch:
        """Run B slots under the current (frozen) parameters."""
        cfg = self.config
        N = cfg.context_size
        theta_checksum = self.policy.checksum()

        if self._obs is None:
            self._obs = self.env.reset()
        if self.window is not None:
            self.window.refresh()
        if self._current is None:
            self._current = self._augment(self._obs)

        rows = self.window.rows() if self.window is not None else []
        span = (0, len(rows))
        potentials = self.potentials

        tuples = []
        for _ in range(cfg.batch_size):
            state, xi = self._current
            sample = self.policy.sample(state, self.streams.policy)
            next_obs, cost = self.env.step(sample.action)

            if self.window is not None:
                row = transition_row(self._obs, sample.features, next_obs)
                rows.append(row)
                self.window.append(row)
            next_span = (max(0, len(rows) - N), len(rows))
            next_state, next_xi = self._augment(next_obs)

            costs = cost.all_costs
            shaped = reshape_costs(costs, state, next_state, potentials)
            tuples.append(ObservationTuple(
                state=state,
                raw_action=sample.raw,
                action=sample.action,
                log_prob=sample.log_prob,
                costs=costs,
                reshaped=shaped.reshaped,
                next_state=next_state,
                dropouts=cost.dropouts,
                resolved=cost.service.resolved,
                regime_id=self.env.state.regime.regime_id,
                xi=xi,
                span=span,
            ))
            self._obs = next_obs
            self._current = (next_state, next_xi)
            span = next_span

        width = 2 * self.obs_dim + self.bounds.dim
        context_rows = np.stack(rows) if rows else np.empty((0, width))
        return IterationBatch(tuples, context_rows, theta_checksum)

    # -- critic phase ----------------------------------------------------

    def _critic_phase(self, batch: IterationBatch, upsilon: float, train_ci: bool):
        cfg = self.config
        K = cfg.num_users
        residuals = np.zeros(K + 1)
        kl_total = 0.0

        for mb in batch.minibatches(cfg.critic_batches):
            states = mb.states()
            next_states = mb.next_states()
            feats = action_features(mb.raw_actions())
            next_feats = action_features(self.policy.sample_raw(next_states, self.streams.successor))
            costs = mb.reshaped_costs()

            if self.encoder is not None and train_ci:
                targets = np.stack([
                    costs[:, k] - self.f_hat[k] + self.critics[k].q_value(next_states, next_feats)
                    for k in range(1, K + 1)
                ])
                step = encoder_update(
                    self.encoder,
                    self.critics[1:],
                    EncoderBatch(
                        rows=mb.context_rows,
                        spans=[t.span for t in mb.tuples],
                        xis=[t.xi for t in mb.tuples],
                        observations=states[:, :self.obs_dim],
                        actions=feats,
                        targets=targets,
                    ),
                    upsilon,
                )
                self.encoder.set_psi(step.psi)
                kl_total += step.kl

            for k, critic in enumerate(self.critics):
                omega, delta = td_critic_update(
                    critic,
                    CriticBatch(states, feats, costs[:, k], next_states, next_feats),
                    self.f_hat[k],
                    upsilon,
                )
                critic.set_omega(omega)
                residuals[k] += np.abs(delta).sum()

            if self.potentials and train_ci:
                for critic in self.potentials:
                    phi, _ = potential_update(
                        critic, states, self.policy, cfg.potential_samples, upsilon,
                        self.streams.potential,
                    )
                    critic.set_phi(phi)

        n = len(batch)
        return kl_total / n, residuals / n

    # -- one iteration ---------------------------------------------------

    def step(self) -> IterationReport:
        """One pass of the policy-iteration loop; returns its report."""
        self.iteration += 1
        i = self.iteration
        cfg = self.config
        phase = self.phase(i)
        train_ci = not (cfg.freeze_ci_after_pretrain and phase == DEPLOY)

        with self.profiler.measure("collection"):
            batch = self.collect()
        mu, eta, upsilon = step_sizes(i, self.schedule)

        with self.profiler.measure("critic"):
            self.f_hat = update_scalar_average(self.f_hat, estimate_f_tilde(batch), eta)
            mean_kl, mean_residuals = self._critic_phase(batch, upsilon, train_ci)

        with self.profiler.measure("actor"):
            g_tilde = estimate_g_tilde(batch, self.policy, self.critics)
            self.g_hat = update_scalar_average(self.g_hat, g_tilde, eta)

            theta = self.policy.theta
            surrogates = build_surrogates(theta, self.f_hat, self.g_hat, cfg.zeta)
            result = solve_objective_update(surrogates, self.box, cfg.dual_max_iter, cfg.dual_tol)
            if isinstance(result, Infeasible):
                solution, branch = result.certificate, FEASIBLE
            else:
                solution, branch = result, OBJECTIVE
            self.policy.set_theta(mix_theta(theta, solution.theta, mu))
        logger.debug("iter %d timing: %s", i, self.profiler.get_summary())

        shaping = np.stack([t.shaping[1:] for t in batch.tuples])
        if self.latent_dim:
            mean_abs_z = float(np.abs(batch.states()[:, self.obs_dim:]).mean())
        else:
            mean_abs_z = 0.0

        report = IterationReport(
            iteration=i,
            phase=phase,
            batch=batch,
            branch=branch,
            dual_iterations=solution.iterations,
            max_violation=float(solution.max_violation),
            f_hat=self.f_hat.copy(),
            mu=mu,
            eta=eta,
            upsilon=upsilon,
            theta_checksum=batch.theta_checksum,
            mean_kl=mean_kl,
            mean_residuals=mean_residuals,
            mean_abs_shaping=np.abs(shaping).mean(axis=0),
            mean_abs_z=mean_abs_z,
        )
        logger.info(
            "iter %d [%s] f0=%.4f max_fk=%.4f branch=%s dual_it=%d mu=%.3g eta=%.3g ups=%.3g",
            i, phase, self.f_hat[0], self.f_hat[1:].max(), branch, solution.iterations,
            mu, eta, upsilon,
        )
        logger.debug(
            "iter %d ci: kl=%.4g residuals=%s |F|=%s",
            i, mean_kl, np.round(mean_residuals, 4), np.round(report.mean_abs_shaping, 4),
        )
        return report

    # -- frozen-policy evaluation ----------------------------------------

    def evaluate(self, slots: int, rng: np.random.Generator) -> EvaluationResult:
        """
        Run the current policy without learning on a fresh environment.

        Actions are squash(mu(s)); z is the posterior mean of a window that
        starts empty.
        """
        env = XRDownlinkEnv(self.env.config, rng)
        obs = env.reset()
        window = EncodedWindow(self.encoder, self.config.context_size) if self.encoder else None

        K = self.config.num_users
        power = 0.0
        dropped = np.zeros(K, dtype=np.int64)
        resolved = np.zeros(K, dtype=np.int64)
        for _ in range(slots):
            state = obs if window is None else np.concatenate([obs, window.infer(mode="mean").z])
            chosen = self.policy.mean_action(state)
            action: Action = chosen.action
            next_obs, cost = env.step(action)
            if window is not None:
                window.append(transition_row(obs, chosen.features, next_obs))
            power += action.total_power
            dropped += cost.service.dropout
            resolved += cost.service.resolved
            obs = next_obs

        rates = np.zeros(K)
        np.divide(dropped, resolved, out=rates, where=resolved > 0)
        return EvaluationResult(
            slots=slots,
            mean_power=power / max(slots, 1),
            dropout_rates=rates,
            dropped=dropped,
            resolved=resolved,
            max_dropout_rate=self.config.max_dropout_rate,
        )


def variant_dispatch(
    variant: Union[str, Variant],
    config: ExperimentConfig,
    env: XRDownlinkEnv,
    streams: RandomStreams,
) -> CACRLAgent:
    """Wire an agent for the named variant."""
    if not isinstance(variant, Variant):
        try:
            variant = Variant(variant)
        except ValueError as exc:
            choices = ", ".join(v.value for v in Variant)
            raise ConfigurationError(f"unknown variant {variant!r}; expected one of {choices}") from exc
    return CACRLAgent(config, variant, env, streams)
