"""Learning algorithms over finite model classes.

Every learner interacts with the ground-truth member of a :class:`~psrlab.models.ModelClass`
through :func:`~psrlab.models.sample_trajectory`, draws all randomness from
``derive_rng(seed, algorithm, iteration, purpose)`` and appends one record per
iteration to a :class:`RunLog`.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from psrlab.exceptions import ConfigError, DimensionMismatchError, ModelValidationError
from psrlab.metrics import psrlab_confidence_set_size, psrlab_episodes_total
from psrlab.models import MixturePolicy, compose_exploration, exploration_mixture, sample_trajectory, value
from psrlab.run_logging import emit_finished, emit_iteration
from psrlab.saddle import LinearSaddle, SaddleObjective, solve_saddle
from psrlab.settings import get_app_settings
from psrlab.stability import pi_norm, pi_norm_argmax, sup_tv_distance
from psrlab.utils import argmax_with_ties, derive_rng, format_trajectory, trajectory_index

DEFAULT_ETA = {"e2d": 1.0 / 3.0, "mops": 1.0 / 6.0, "rfe2d": 1.0 / 2.0}

CSV_COLUMNS = (
    "iteration",
    "chosen_model",
    "policy",
    "set_size",
    "confidence_set",
    "posterior_entropy",
    "truth_mass",
    "suboptimality",
    "output_suboptimality",
    "estimation_error",
    "saddle_value",
    "saddle_gap",
    "trajectory",
)


def _floor():
    return get_app_settings()["likelihood_floor"]


def trajectory_log_probability(model, trajectory):
    """``(log P_theta(tau), flagged)`` with the probability floored at ``likelihood_floor``."""
    prob = model.trajectory_probability(trajectory)
    return math.log(max(prob, _floor())), prob <= 0.0


def log_likelihood(model, policy, trajectory):
    """``log(P_theta(tau) * pi(tau))``.

    The model term is floored at ``likelihood_floor``; the policy term is shared by every
    model and cancels in confidence-set comparisons.
    """
    model_term, _ = trajectory_log_probability(model, trajectory)
    factor = policy.policy_factor(trajectory)
    return model_term + (math.log(factor) if factor > 0.0 else -math.inf)


def default_beta(class_size, delta=0.01):
    """``C * log(|Theta| / delta)`` with ``C = mle_beta_constant``."""
    return get_app_settings()["mle_beta_constant"] * math.log(class_size / delta)


def confidence_set(log_likelihoods, beta, flagged=None):
    """Indices whose total log-likelihood is within ``beta`` of the best.

    Flagged members (zero likelihood on some trajectory) are excluded for every finite ``beta``.
    """
    totals = np.asarray(log_likelihoods, dtype=float)
    if math.isinf(beta):
        return list(range(len(totals)))
    flagged = np.zeros(len(totals), dtype=bool) if flagged is None else np.asarray(flagged, dtype=bool)
    eligible = np.where(flagged, -np.inf, totals)
    if np.all(np.isneginf(eligible)):
        eligible = totals
    threshold = eligible.max() - beta
    members = [index for index, total in enumerate(eligible) if total >= threshold]
    if not members:
        raise ModelValidationError("confidence set is empty")
    return members


def tempered_update(log_mu, log_lik, eta):
    """``log mu'(theta) = log mu(theta) + eta * log_lik(theta)``, renormalized."""
    log_mu = np.asarray(log_mu, dtype=float)
    if eta == 0.0:
        return log_mu - logsumexp(log_mu)
    updated = log_mu + eta * np.asarray(log_lik, dtype=float)
    total = logsumexp(updated)
    if not np.isfinite(total):
        raise ModelValidationError("trajectory has zero likelihood under every member")
    return updated - total


def _entropy(mu):
    positive = mu[mu > 0.0]
    return float(-(positive * np.log(positive)).sum())


# --- Covers, pools and precomputed tables ---


@dataclass(frozen=True, eq=False)
class OptimisticCover:
    """Members ``Theta_0`` (class indices) with optimistic do-probability tables and radius ``rho``."""

    members: tuple
    likelihoods: np.ndarray
    radius: float = 0.0

    @classmethod
    def exact(cls, model_class):
        """``Theta_0 = Theta``, ``P~ = P``, ``rho = 0``."""
        tables = np.array([member.do_probabilities() for member in model_class.members])
        return cls(tuple(range(len(model_class))), tables, 0.0)

    def __len__(self):
        """Number of cover members."""
        return len(self.members)

    def validate(self, model_class):
        """Check that every class member is dominated by a cover member within ``rho^2`` in ℓ1.

        Raises:
            ModelValidationError: If some member has no dominating cover element.
        """
        if self.likelihoods.shape[0] != len(self.members):
            raise DimensionMismatchError("one likelihood table is needed per cover member")
        tol = get_app_settings()["distribution_tolerance"]
        for index, member in enumerate(model_class.members):
            probs = member.do_probabilities()
            dominated = any(
                np.all(table >= probs - tol) and np.abs(table - probs).sum() <= self.radius**2 + tol
                for table in self.likelihoods
            )
            if not dominated:
                raise ModelValidationError(f"member {index} is not covered")


@dataclass
class PolicyPool:
    """Candidate policies for the saddle problems.

    Holds each distinct optimal policy, its exploration compositions at every step and their mixture.
    """

    policies: list
    optimal_index: np.ndarray
    mixture_index: np.ndarray

    def __len__(self):
        """Pool size."""
        return len(self.policies)


def policy_pool(model_class):
    """``{pi_theta} ∪ {phi_h ⋄ pi_theta} ∪ {phi ⋄ pi_theta}`` with duplicate optimal policies merged."""
    core = model_class.core
    policies, optimal_index, mixture_index = [], [], []
    distinct = []
    for policy, _ in model_class.optimal:
        match = next((slot for slot, (other, _) in enumerate(distinct) if policy.same_rule(other)), None)
        if match is None:
            start = len(policies)
            policies.append(policy)
            policies.extend(compose_exploration(policy, h, core) for h in range(model_class.horizon))
            policies.append(exploration_mixture(policy, core))
            distinct.append((policy, start))
            match = len(distinct) - 1
        start = distinct[match][1]
        optimal_index.append(start)
        mixture_index.append(start + model_class.horizon + 1)
    return PolicyPool(policies, np.array(optimal_index), np.array(mixture_index))


class ClassTables:
    """Exact per-member arrays shared by the learners."""

    def __init__(self, model_class, pool=None):
        """Enumerate do-probabilities and rewards, plus pool values and Hellinger tensors when a pool is given."""
        self.model_class = model_class
        self.do = np.array([member.do_probabilities() for member in model_class.members])
        self.rewards = np.array([member.trajectory_rewards() for member in model_class.members])
        self.best = np.array([best for _, best in model_class.optimal])
        self.pool = pool
        if pool is not None:
            horizon = model_class.horizon
            self.factors = np.array([policy.factor_table(model_class.num_obs, horizon) for policy in pool.policies])
            self.values = np.einsum("kn,pn->kp", self.do * self.rewards, self.factors)
            roots = np.sqrt(self.do)
            gaps = (roots[:, None, :] - roots[None, :, :]) ** 2
            self.hellinger = np.einsum("pn,ijn->pij", self.factors, gaps)
            truth = model_class.truth_index
            self.truth_gap = self.best[truth] - self.values[truth]

    def trajectory_probs(self, trajectory):
        """``P_theta(tau)`` for every member."""
        return self.do[:, trajectory_index(trajectory, self.model_class.num_obs, self.model_class.num_actions)]


# --- Run logs ---


@dataclass
class RunLog:
    """Append-only per-iteration records of one learner run."""

    algorithm: str
    seed: int
    config: dict
    records: list = field(default_factory=list)
    result: dict = field(default_factory=dict)

    def append(self, record):
        """Add a record and emit it to the run log."""
        record = {"algorithm": self.algorithm, "seed": self.seed, **record}
        self.records.append(record)
        emit_iteration(record)

    def column(self, key):
        """Values of ``key`` across records."""
        return [record.get(key) for record in self.records]

    def to_csv(self, path):
        """Write one row per iteration; floats use ``repr`` so reruns are byte-identical."""
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(CSV_COLUMNS)
            for record in self.records:
                writer.writerow([_csv_cell(record.get(column)) for column in CSV_COLUMNS])

    def summary(self):
        """Final statistics of the run."""
        summary = {"iterations": len(self.records), **self.result}
        if self.records:
            last = self.records[-1]
            for key in ("output_suboptimality", "estimation_error", "truth_mass", "set_size"):
                if last.get(key) is not None:
                    summary[f"final_{key}"] = last[key]
        return summary

    def to_json(self):
        """JSON summary with the seed and configuration snapshot."""
        payload = {"algorithm": self.algorithm, "seed": self.seed, "config": self.config, "summary": self.summary()}
        return json.dumps(payload, indent=2, sort_keys=True, default=_json_default)


def _csv_cell(entry):
    if entry is None:
        return ""
    if isinstance(entry, float):
        return repr(entry)
    if isinstance(entry, (list, tuple)):
        return ";".join(str(item) for item in entry)
    return str(entry)


def _json_default(entry):
    if isinstance(entry, np.generic):
        return entry.item()
    if isinstance(entry, np.ndarray):
        return entry.tolist()
    raise TypeError(f"cannot serialize {type(entry).__name__}")


def _mixture(policies, weights, label):
    weights = np.asarray(weights, dtype=float)
    keep = [(float(weight), policy) for weight, policy in zip(weights, policies) if weight > 0.0]
    total = sum(weight for weight, _ in keep)
    return MixturePolicy([(weight / total, policy) for weight, policy in keep], label=label)


def _finish(log, summary):
    log.result.update(summary)
    emit_finished(log.algorithm, log.seed, log.summary())


# --- OMLE ---


def omle(model_class, iterations, beta=None, rng_seed=0, delta=0.01):
    """Optimistic maximum likelihood estimation.

    Each iteration plans optimistically over the confidence set, executes the ``H``
    exploration compositions of the chosen optimal policy and shrinks the set to the
    ``beta``-superlevel set of the total log-likelihood.

    Args:
        model_class (ModelClass): The finite class; its truth generates the data.
        iterations (int): ``K``.
        beta (float | None): Confidence radius; defaults to :func:`default_beta`.
        rng_seed (int): Root seed.
        delta (float): Failure probability used by the default ``beta``.

    Returns:
        tuple[MixturePolicy, RunLog]: ``Unif({pi^k})`` and the run log.
    """
    beta = default_beta(len(model_class), delta) if beta is None else float(beta)
    log = RunLog("omle", int(rng_seed), {"iterations": iterations, "beta": beta, "delta": delta})
    tables = ClassTables(model_class)
    truth, core, horizon = model_class.truth, model_class.core, model_class.horizon
    floor = _floor()
    totals = np.zeros(len(model_class))
    flagged = np.zeros(len(model_class), dtype=bool)
    members = list(range(len(model_class)))
    counts = np.zeros(len(model_class))
    explorers = {}
    truth_values = {}
    cumulative = 0.0
    truth_always_in_set = True
    for k in range(1, iterations + 1):
        theta = members[int(argmax_with_ties(tables.best[members]))]
        policy = model_class.optimal[theta][0]
        trajectories = []
        for h in range(horizon):
            if (theta, h) not in explorers:
                explorers[(theta, h)] = compose_exploration(policy, h, core)
            tau = sample_trajectory(truth, explorers[(theta, h)], derive_rng(rng_seed, "omle", k, h))
            probs = tables.trajectory_probs(tau)
            flagged |= probs <= 0.0
            totals += np.log(np.maximum(probs, floor))
            trajectories.append(format_trajectory(tau))
        psrlab_episodes_total.labels(algorithm="omle").inc(horizon)
        psrlab_confidence_set_size.labels(algorithm="omle").observe(len(members))
        if theta not in truth_values:
            truth_values[theta] = value(truth, policy)
        suboptimality = float(model_class.truth_optimal_value - truth_values[theta])
        cumulative += suboptimality
        counts[theta] += 1
        truth_always_in_set = truth_always_in_set and model_class.truth_index in members
        log.append(
            {
                "iteration": k,
                "chosen_model": theta,
                "policy": policy.describe(),
                "set_size": len(members),
                "confidence_set": tuple(members),
                "suboptimality": suboptimality,
                "output_suboptimality": cumulative / k,
                "trajectory": tuple(trajectories),
            }
        )
        members = confidence_set(totals, beta, flagged)
    output = _mixture([policy for policy, _ in model_class.optimal], counts, "omle-output")
    _finish(log, {"truth_always_in_set": truth_always_in_set})
    return output, log


def mle_hellinger_check(log, model_class, beta):
    """Per-iteration slack of the cumulative Hellinger guarantee.

    For iteration ``k`` this is ``max_{theta in Theta^k} sum_{t<k} sum_h D_H^2(P^{pi^t_{h,exp}}_theta,
    P^{pi^t_{h,exp}}_{theta*}) - 2 beta``; nonpositive values satisfy the guarantee.
    """
    core, horizon = model_class.core, model_class.horizon
    do = np.array([member.do_probabilities() for member in model_class.members])
    roots = np.sqrt(do)
    truth_root = roots[model_class.truth_index]
    per_choice = {}
    running = np.zeros(len(model_class))
    slacks = []
    for record in log.records:
        members = list(record["confidence_set"])
        slacks.append(float(running[members].max() - 2.0 * beta))
        theta = record["chosen_model"]
        if theta not in per_choice:
            policy = model_class.optimal[theta][0]
            total = np.zeros(len(model_class))
            for h in range(horizon):
                factors = compose_exploration(policy, h, core).factor_table(model_class.num_obs, horizon)
                total += ((roots - truth_root[None, :]) ** 2) @ factors
            per_choice[theta] = total
        running = running + per_choice[theta]
    return np.array(slacks)


# --- E2D family ---


def _cover_and_tables(model_class, cover, with_pool=True):
    cover = OptimisticCover.exact(model_class) if cover is None else cover
    cover.validate(model_class)
    pool = policy_pool(model_class) if with_pool else None
    return cover, ClassTables(model_class, pool)


def _information_cost(tables, cover, mu, gamma):
    """``gamma * E_{theta_bar ~ mu} D_H^2(P^pi_theta, P^pi_theta_bar)`` per (pool policy, theta)."""
    weights = np.zeros(len(tables.model_class))
    weights[list(cover.members)] = mu
    return gamma * np.einsum("pij,j->pi", tables.hellinger, weights)


def edec_saddle(model_class, mu, gamma, policy_pool_=None, solver_cfg=None, tables=None, cover=None):
    """Minimize the explorative DEC objective at the posterior ``mu``.

    ``min_{p_exp, p_out} max_theta E_{pi~p_out}[V_theta(pi_theta) - V_theta(pi)]
    - gamma E_{pi~p_exp} E_{theta_bar~mu}[D_H^2(P^pi_theta, P^pi_theta_bar)]`` over the pool.

    Args:
        model_class (ModelClass): The class.
        mu (np.ndarray): Distribution over the cover members.
        gamma (float): Information weight.
        policy_pool_ (PolicyPool | None): Defaults to :func:`policy_pool`.
        solver_cfg (dict | None): Keyword arguments for :func:`~psrlab.saddle.solve_saddle`.
        tables (ClassTables | None): Precomputed tables for the same pool.
        cover (OptimisticCover | None): Defaults to the exact cover.

    Returns:
        SaddleSolution: ``p_exp`` and ``p_out`` over the pool, with the objective value.
    """
    objective = edec_objective(model_class, mu, gamma, policy_pool_, tables, cover)
    return solve_saddle(objective, problem="edec", **(solver_cfg or {}))


def edec_objective(model_class, mu, gamma, policy_pool_=None, tables=None, cover=None):
    """The explorative DEC objective at ``mu`` as a :class:`~psrlab.saddle.LinearSaddle` over the pool."""
    cover = OptimisticCover.exact(model_class) if cover is None else cover
    if tables is None:
        tables = ClassTables(model_class, policy_pool(model_class) if policy_pool_ is None else policy_pool_)
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (len(cover),):
        raise DimensionMismatchError("mu must weight every cover member")
    gain = (tables.best[:, None] - tables.values).T
    return LinearSaddle(gain, _information_cost(tables, cover, mu, gamma))


class AllPolicyEstimationSaddle(SaddleObjective):
    """``max_theta sup_pi E_{theta_bar~mu_out} D_TV(P^pi_theta, P^pi_theta_bar) - p_exp . cost[:, theta]``.

    The inner supremum is half the Π-norm of ``sum_theta_bar mu_out(theta_bar) |P_theta - P_theta_bar|``.
    """

    def __init__(self, do, cost, num_obs, num_actions):
        """Precompute the pairwise absolute do-probability differences."""
        self.abs_diff = np.abs(do[:, None, :] - do[None, :, :])
        self.cost = cost
        self.num_obs = num_obs
        self.num_actions = num_actions
        self.n_exp, self.n_out = cost.shape[0], do.shape[0]

    def estimation_errors(self, p_out):
        """``sup_pi E_{theta_bar~p_out} D_TV(P^pi_theta, P^pi_theta_bar)`` for every ``theta``."""
        mixed = np.einsum("kjn,j->nk", self.abs_diff, p_out)
        return 0.5 * np.atleast_1d(pi_norm(mixed, self.num_obs, self.num_actions)), mixed

    def evaluate(self, p_exp, p_out):
        """Best-response model with the subgradient of its maximizing policy."""
        errors, mixed = self.estimation_errors(p_out)
        values = errors - p_exp @ self.cost
        k = int(np.argmax(values))
        weights = pi_norm_argmax(mixed[:, k], self.num_obs, self.num_actions)
        grad_out = 0.5 * self.abs_diff[k] @ weights
        return float(values[k]), (k, weights.tobytes()), -self.cost[:, k], grad_out


def amdec_saddle(model_class, mu, gamma, policy_pool_=None, solver_cfg=None, tables=None, cover=None):
    """Minimize the all-policy model-estimation DEC objective at ``mu``; ``p_out`` is ``mu_out`` over the class."""
    cover = OptimisticCover.exact(model_class) if cover is None else cover
    if tables is None:
        tables = ClassTables(model_class, policy_pool(model_class) if policy_pool_ is None else policy_pool_)
    cost = _information_cost(tables, cover, np.asarray(mu, dtype=float), gamma)
    objective = AllPolicyEstimationSaddle(tables.do, cost, model_class.num_obs, model_class.num_actions)
    return solve_saddle(objective, problem="amdec", **(solver_cfg or {}))


def _update_posterior(log_mu, probs, eta):
    floor = _floor()
    updated = tempered_update(log_mu, np.log(np.maximum(probs, floor)), eta)
    if eta > 0.0 and np.any(probs <= 0.0):
        updated = np.where(probs <= 0.0, -np.inf, updated)
        total = logsumexp(updated)
        if not np.isfinite(total):
            raise ModelValidationError("trajectory has zero likelihood under every member")
        updated = updated - total
    return updated


def _sample_index(rng, weights):
    weights = np.maximum(np.asarray(weights, dtype=float), 0.0)
    return int(rng.choice(len(weights), p=weights / weights.sum()))


def explorative_e2d(model_class, episodes, gamma, eta=DEFAULT_ETA["e2d"], rng_seed=0, cover=None, solver_cfg=None):
    """Explorative estimation-to-decisions with tempered aggregation.

    Returns:
        tuple[MixturePolicy, RunLog]: ``(1/T) sum_t p_out^t`` over the pool and the run log.
    """
    snapshot = {"episodes": episodes, "gamma": gamma, "eta": eta, "solver_cfg": solver_cfg or {}}
    log = RunLog("e2d", int(rng_seed), snapshot)
    cover, tables = _cover_and_tables(model_class, cover)
    pool = tables.pool
    truth = model_class.truth
    log_mu = np.full(len(cover), -math.log(len(cover)))
    out_weights = np.zeros(len(pool))
    cumulative = 0.0
    truth_slot = cover.members.index(model_class.truth_index) if model_class.truth_index in cover.members else None
    for t in range(1, episodes + 1):
        mu = np.exp(log_mu)
        solution = edec_saddle(model_class, mu, gamma, solver_cfg=solver_cfg, tables=tables, cover=cover)
        choice = _sample_index(derive_rng(rng_seed, "e2d", t, "policy"), solution.p_exp)
        tau = sample_trajectory(truth, pool.policies[choice], derive_rng(rng_seed, "e2d", t, "episode"))
        psrlab_episodes_total.labels(algorithm="e2d").inc()
        column = trajectory_index(tau, model_class.num_obs, model_class.num_actions)
        log_mu = _update_posterior(log_mu, cover.likelihoods[:, column], eta)
        out_weights += solution.p_out
        suboptimality = float(solution.p_out @ tables.truth_gap)
        cumulative += suboptimality
        posterior = np.exp(log_mu)
        log.append(
            {
                "iteration": t,
                "policy": pool.policies[choice].describe(),
                "posterior_entropy": _entropy(posterior),
                "truth_mass": float(posterior[truth_slot]) if truth_slot is not None else None,
                "suboptimality": suboptimality,
                "output_suboptimality": cumulative / t,
                "saddle_value": float(solution.value),
                "saddle_gap": float(solution.gap),
                "trajectory": format_trajectory(tau),
            }
        )
    output = _mixture(pool.policies, out_weights / episodes, "e2d-output")
    _finish(log, {})
    return output, log


def mops(model_class, episodes, gamma, eta=DEFAULT_ETA["mops"], rng_seed=0, cover=None):
    """Model-based optimistic posterior sampling.

    The posterior is ``mu^1(theta) exp(sum_s (V_theta(pi_theta) / gamma + eta log P_theta(tau^s)))``.

    Returns:
        tuple[MixturePolicy, RunLog]: ``(1/T) sum_t p_out(mu^t)`` and the run log.
    """
    log = RunLog("mops", int(rng_seed), {"episodes": episodes, "gamma": gamma, "eta": eta})
    cover, tables = _cover_and_tables(model_class, cover)
    pool = tables.pool
    truth, core, horizon = model_class.truth, model_class.core, model_class.horizon
    members = list(cover.members)
    optimism = np.zeros(len(cover)) if math.isinf(gamma) else tables.best[members] / gamma
    floor = _floor()
    scores = np.zeros(len(cover))
    excluded = np.zeros(len(cover), dtype=bool)
    out_weights = np.zeros(len(pool))
    explorers = {}
    cumulative = 0.0
    truth_slot = members.index(model_class.truth_index) if model_class.truth_index in members else None

    def posterior():
        logits = np.where(excluded, -np.inf, scores)
        return np.exp(logits - logsumexp(logits))

    for t in range(1, episodes + 1):
        mu = posterior()
        slot = _sample_index(derive_rng(rng_seed, "mops", t, "model"), mu)
        h = int(derive_rng(rng_seed, "mops", t, "step").integers(horizon))
        theta = members[slot]
        if (theta, h) not in explorers:
            explorers[(theta, h)] = compose_exploration(model_class.optimal[theta][0], h, core)
        tau = sample_trajectory(truth, explorers[(theta, h)], derive_rng(rng_seed, "mops", t, "episode"))
        psrlab_episodes_total.labels(algorithm="mops").inc()
        probs = cover.likelihoods[:, trajectory_index(tau, model_class.num_obs, model_class.num_actions)]
        if eta > 0.0:
            excluded |= probs <= 0.0
            if np.all(excluded):
                raise ModelValidationError("trajectory has zero likelihood under every member")
        scores += optimism + eta * np.log(np.maximum(probs, floor))
        np.add.at(out_weights, pool.optimal_index[members], mu)
        suboptimality = float(mu @ tables.truth_gap[pool.optimal_index[members]])
        cumulative += suboptimality
        updated = posterior()
        log.append(
            {
                "iteration": t,
                "chosen_model": theta,
                "policy": explorers[(theta, h)].describe(),
                "posterior_entropy": _entropy(updated),
                "truth_mass": float(updated[truth_slot]) if truth_slot is not None else None,
                "suboptimality": suboptimality,
                "output_suboptimality": cumulative / t,
                "trajectory": format_trajectory(tau),
            }
        )
    output = _mixture(pool.policies, out_weights / episodes, "mops-output")
    _finish(log, {})
    return output, log


def _estimate(objective, out_weights):
    errors, _ = objective.estimation_errors(out_weights)
    return int(argmax_with_ties(-errors))


def rf_e2d(model_class, episodes, gamma, eta=DEFAULT_ETA["rfe2d"], rng_seed=0, cover=None, solver_cfg=None):
    """All-policy model-estimation E2D.

    Returns:
        tuple[int, RunLog]: The class index of ``theta_hat`` and the run log.
    """
    snapshot = {"episodes": episodes, "gamma": gamma, "eta": eta, "solver_cfg": solver_cfg or {}}
    log = RunLog("rfe2d", int(rng_seed), snapshot)
    cover, tables = _cover_and_tables(model_class, cover)
    pool = tables.pool
    truth, obs, actions = model_class.truth, model_class.num_obs, model_class.num_actions
    truth_do = tables.do[model_class.truth_index]
    estimator = AllPolicyEstimationSaddle(tables.do, np.zeros((1, len(model_class))), obs, actions)
    log_mu = np.full(len(cover), -math.log(len(cover)))
    out_sum = np.zeros(len(model_class))
    truth_slot = cover.members.index(model_class.truth_index) if model_class.truth_index in cover.members else None
    estimate = model_class.truth_index
    for t in range(1, episodes + 1):
        solution = amdec_saddle(model_class, np.exp(log_mu), gamma, solver_cfg=solver_cfg, tables=tables, cover=cover)
        choice = _sample_index(derive_rng(rng_seed, "rfe2d", t, "policy"), solution.p_exp)
        tau = sample_trajectory(truth, pool.policies[choice], derive_rng(rng_seed, "rfe2d", t, "episode"))
        psrlab_episodes_total.labels(algorithm="rfe2d").inc()
        log_mu = _update_posterior(log_mu, cover.likelihoods[:, trajectory_index(tau, obs, actions)], eta)
        out_sum += solution.p_out
        estimate = _estimate(estimator, out_sum / t)
        posterior = np.exp(log_mu)
        log.append(
            {
                "iteration": t,
                "chosen_model": estimate,
                "policy": pool.policies[choice].describe(),
                "posterior_entropy": _entropy(posterior),
                "truth_mass": float(posterior[truth_slot]) if truth_slot is not None else None,
                "estimation_error": sup_tv_distance(tables.do[estimate], truth_do, obs, actions),
                "saddle_value": float(solution.value),
                "saddle_gap": float(solution.gap),
                "trajectory": format_trajectory(tau),
            }
        )
    _finish(log, {"estimate": estimate})
    return estimate, log


def epsc_value(model_class, mu, gamma, reference=None, tables=None):
    """Explorative PSC objective at a finitely supported ``mu`` over the class.

    ``E_{theta~mu}[V_theta(pi_theta) - V_ref(pi_theta)] - gamma E_{theta, theta'~mu}
    D_H^2(P^{phi ⋄ pi_theta'}_theta, P^{phi ⋄ pi_theta'}_ref)``; ``reference`` defaults to the truth.
    """
    tables = ClassTables(model_class, policy_pool(model_class)) if tables is None else tables
    reference = model_class.truth_index if reference is None else reference
    mu = np.asarray(mu, dtype=float)
    pool = tables.pool
    gains = tables.best - tables.values[reference, pool.optimal_index]
    information = tables.hellinger[pool.mixture_index][:, :, reference]
    return float(mu @ gains - gamma * mu @ information.T @ mu)


# --- Dispatch and replay ---

ALGORITHMS = {
    "omle": omle,
    "e2d": explorative_e2d,
    "mops": mops,
    "rfe2d": rf_e2d,
}


def run_learner(algorithm, model_class, rng_seed, **params):
    """Run a learner by name with keyword hyperparameters."""
    try:
        runner = ALGORITHMS[algorithm]
    except KeyError as exc:
        raise ConfigError(f"unknown algorithm {algorithm!r}") from exc
    return runner(model_class, rng_seed=rng_seed, **params)


def replay_run(log, model_class):
    """Rerun a logged learner from its seed and configuration.

    Returns:
        tuple[bool, RunLog]: Whether every record matches, and the new log.
    """
    _, replayed = run_learner(log.algorithm, model_class, log.seed, **log.config)
    return replayed.records == log.records, replayed
