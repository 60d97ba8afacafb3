"""Exact tabular machinery: POMDP models, policies, trajectory distributions, planning and sampling.

Trajectories are alternating tuples ``(o_1, a_1, ..., o_h, a_h)`` and every
trajectory-indexed array is laid out in C order with the earliest step most
significant, so ``utils.trajectory_index`` and ``utils.iter_trajectories`` agree
with the arrays built here.
"""

import abc
import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import jsonschema
import numpy as np

from psrlab.exceptions import ConfigError, DimensionMismatchError, ModelValidationError
from psrlab.settings import get_app_settings
from psrlab.utils import (
    argmax_with_ties,
    as_generator,
    check_capacity,
    format_trajectory,
    is_column_stochastic,
    iter_histories,
    iter_trajectories,
    num_trajectories,
    trajectory_index,
)

_MODEL_SCHEMA_PATH = Path(__file__).parent / "model-schema.json"


@dataclass(frozen=True, eq=False)
class PomdpModel:
    """A finite-horizon tabular POMDP.

    ``transitions[h - 1, a]`` is the column-stochastic matrix ``T_h(s' | s, a)`` indexed
    ``[s', s]`` for ``h`` in ``1..H-1``; ``emissions[h - 1]`` is ``O_h(o | s)`` indexed
    ``[o, s]``; ``rewards[h - 1]`` is ``r_h(o, a)``.
    """

    horizon: int
    num_states: int
    num_obs: int
    num_actions: int
    transitions: np.ndarray
    emissions: np.ndarray
    initial: np.ndarray
    rewards: np.ndarray
    name: str = ""
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        """Coerce arrays, freeze them and check every structural invariant."""
        horizon, states, obs, actions = self.horizon, self.num_states, self.num_obs, self.num_actions
        if min(horizon, states, obs, actions) < 1:
            raise ModelValidationError("horizon and cardinalities must be positive")
        arrays = {
            "transitions": (horizon - 1, actions, states, states),
            "emissions": (horizon, obs, states),
            "initial": (states,),
            "rewards": (horizon, obs, actions),
        }
        for attr, shape in arrays.items():
            value = np.array(getattr(self, attr), dtype=float)
            if attr == "transitions" and horizon == 1 and value.size == 0:
                value = np.zeros(shape)
            if value.shape != shape:
                raise DimensionMismatchError(f"{attr} has shape {value.shape}, expected {shape}")
            value.setflags(write=False)
            object.__setattr__(self, attr, value)

        tol = get_app_settings()["stochastic_tolerance"]
        for step in range(horizon - 1):
            for action in range(actions):
                if not is_column_stochastic(self.transitions[step, action], tol):
                    raise ModelValidationError(
                        f"transition matrix at step {step + 1}, action {action} is not column-stochastic"
                    )
        for step in range(horizon):
            if not is_column_stochastic(self.emissions[step], tol):
                raise ModelValidationError(f"emission matrix at step {step + 1} is not column-stochastic")
        if not is_column_stochastic(self.initial[:, None], tol):
            raise ModelValidationError("initial distribution is not a probability vector")
        if np.any(self.rewards < 0.0) or np.any(self.rewards > 1.0):
            raise ModelValidationError("rewards must lie in [0, 1]")
        best = self.max_cumulative_reward()
        if best > 1.0 + tol:
            raise ModelValidationError(f"cumulative reward can reach {best:.6f} > 1")

    # --- Exact forward quantities (all action sequences, no policy) ---

    def emission_joint(self, step):
        """``P(tau_{h-1}, o_h, s_h = s)`` under do-actions, shape ``(N_{h-1}, O, S)``."""
        key = ("emission_joint", step)
        if key not in self._cache:
            check_capacity("emission_joint", num_trajectories(self.num_obs, self.num_actions, step - 1) * self.num_obs)
            prior = self.joint_belief(step - 1)
            self._cache[key] = prior[:, None, :] * self.emissions[step - 1][None, :, :]
        return self._cache[key]

    def joint_belief(self, step):
        """``P(tau_h, s_{h+1} = s)`` under do-actions, shape ``(N_h, S)``; ``step = 0`` is the initial law."""
        key = ("joint_belief", step)
        if key not in self._cache:
            if step == 0:
                self._cache[key] = self.initial[None, :].copy()
            else:
                joint = self.emission_joint(step)
                nxt = np.einsum("nos,ats->noat", joint, self.transitions[step - 1])
                self._cache[key] = nxt.reshape(-1, self.num_states)
        return self._cache[key]

    def do_probabilities(self, steps=None):
        """``P(tau_h)`` for every ``tau_h``: observation probabilities under do-actions."""
        steps = self.horizon if steps is None else steps
        if steps == 0:
            return np.ones(1)
        key = ("do_probabilities", steps)
        if key not in self._cache:
            check_capacity("trajectory_distribution", num_trajectories(self.num_obs, self.num_actions, steps))
            observed = self.emission_joint(steps).sum(axis=-1)
            self._cache[key] = np.repeat(observed.ravel(), self.num_actions)
        return self._cache[key]

    def trajectory_rewards(self):
        """Cumulative reward of every full trajectory."""
        if "rewards" not in self._cache:
            check_capacity("trajectory_rewards", num_trajectories(self.num_obs, self.num_actions, self.horizon))
            total = np.zeros(1)
            for step in range(self.horizon):
                total = (total[:, None, None] + self.rewards[step][None, :, :]).ravel()
            self._cache["rewards"] = total
        return self._cache["rewards"]

    def max_cumulative_reward(self):
        """Largest cumulative reward over reachable trajectories.

        A trajectory has positive probability iff some state path supports it, so the maximum
        is a backward recursion over states on the supports of the emissions and transitions.
        """
        best = np.zeros(self.num_states)
        for step in reversed(range(self.horizon)):
            if step + 1 < self.horizon:
                # future[a, s]: best continuation over successors s' with T(s' | s, a) > 0
                support = self.transitions[step] > 0.0
                future = np.where(support, best[None, :, None], -np.inf).max(axis=1)
            else:
                future = np.zeros((self.num_actions, self.num_states))
            candidates = self.rewards[step][:, :, None] + future[None, :, :]
            candidates = np.where(self.emissions[step][:, None, :] > 0.0, candidates, -np.inf)
            best = candidates.max(axis=(0, 1))
        return float(best[self.initial > 0.0].max())

    def trajectory_probability(self, trajectory):
        """Do-probability ``P(tau)`` of one trajectory, computed by a single forward pass."""
        belief = self.initial.copy()
        steps = len(trajectory) // 2
        for step in range(steps):
            obs, action = trajectory[2 * step], trajectory[2 * step + 1]
            belief = belief * self.emissions[step][obs]
            if step + 1 < steps:
                belief = self.transitions[step, action] @ belief
        return float(belief.sum())


# --- Policies ---


class Policy(abc.ABC):
    """A history-dependent decision rule over observable histories ``(o_1, a_1, ..., o_h)``."""

    kind = "abstract"

    def __init__(self, num_actions, label=""):
        """Store the action count and a human-readable label used in run logs."""
        self.num_actions = num_actions
        self.label = label
        self._factor_cache = {}

    @abc.abstractmethod
    def action_distribution(self, history):
        """Return the action distribution at an observable history as a length-A array."""

    def describe(self):
        """Short descriptor for logs."""
        return self.label or self.kind

    def policy_factor(self, trajectory):
        """``pi(tau)``: product of the probabilities of the actions taken in ``trajectory``."""
        factor = 1.0
        for position in range(1, len(trajectory), 2):
            factor *= float(self.action_distribution(tuple(trajectory[:position]))[trajectory[position]])
            if factor == 0.0:
                break
        return factor

    def factor_table(self, num_obs, steps):
        """``pi(tau)`` for every trajectory of the given length, in trajectory index order."""
        key = (num_obs, steps)
        if key not in self._factor_cache:
            check_capacity("policy_factor", num_trajectories(num_obs, self.num_actions, steps))
            self._factor_cache[key] = self._build_factor_table(num_obs, steps)
        return self._factor_cache[key]

    def _build_factor_table(self, num_obs, steps):
        factors = np.ones(1)
        for step in range(1, steps + 1):
            reach = np.repeat(factors, num_obs)
            probs = np.zeros((reach.size, self.num_actions))
            for row, history in enumerate(iter_histories(num_obs, self.num_actions, step)):
                if reach[row] > 0.0:
                    probs[row] = self.action_distribution(history)
            factors = (reach[:, None] * probs).ravel()
        return factors


class DeterministicTablePolicy(Policy):
    """Policy given by a map from observable history to action."""

    kind = "DeterministicTable"

    def __init__(self, table, num_actions, label=""):
        """Validate that every action is in range."""
        super().__init__(num_actions, label)
        self.table = dict(table)
        for history, action in self.table.items():
            if not 0 <= action < num_actions:
                raise ModelValidationError(f"action {action} at history {history} out of range")

    def action_distribution(self, history):
        """One-hot distribution on the tabulated action."""
        try:
            action = self.table[tuple(history)]
        except KeyError as exc:
            raise ModelValidationError(f"policy undefined at history {tuple(history)}") from exc
        probs = np.zeros(self.num_actions)
        probs[action] = 1.0
        return probs

    def same_rule(self, other):
        """True when ``other`` is a deterministic table with identical entries."""
        return isinstance(other, DeterministicTablePolicy) and self.table == other.table


class StochasticTablePolicy(Policy):
    """Policy given by a map from observable history to an action distribution."""

    kind = "StochasticTable"

    def __init__(self, table, num_actions, label=""):
        """Validate every tabulated distribution."""
        super().__init__(num_actions, label)
        tol = get_app_settings()["stochastic_tolerance"]
        self.table = {}
        for history, probs in table.items():
            probs = np.asarray(probs, dtype=float)
            if probs.shape != (num_actions,) or np.any(probs < 0.0) or abs(probs.sum() - 1.0) > tol:
                raise ModelValidationError(f"invalid action distribution at history {history}")
            self.table[tuple(history)] = probs

    def action_distribution(self, history):
        """The tabulated distribution."""
        try:
            return self.table[tuple(history)]
        except KeyError as exc:
            raise ModelValidationError(f"policy undefined at history {tuple(history)}") from exc


class UniformPolicy(Policy):
    """Uniform actions at every history."""

    kind = "StochasticTable"

    def __init__(self, num_actions, label="uniform"):
        """Uniform policy over ``num_actions`` actions."""
        super().__init__(num_actions, label)

    def action_distribution(self, history):
        """``1/A`` for every action."""
        return np.full(self.num_actions, 1.0 / self.num_actions)

    def _build_factor_table(self, num_obs, steps):
        return np.full(num_trajectories(num_obs, self.num_actions, steps), float(self.num_actions) ** -steps)


class MixturePolicy(Policy):
    """A mixture of policies, sampled once per episode with the given weights."""

    kind = "Mixture"

    def __init__(self, components, label=""):
        """Validate that the weights form a probability vector over policies with a shared action set."""
        components = [(float(weight), policy) for weight, policy in components]
        if not components:
            raise ModelValidationError("mixture needs at least one component")
        num_actions = components[0][1].num_actions
        weights = np.array([weight for weight, _ in components])
        if np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ModelValidationError("mixture weights must form a probability vector")
        if any(policy.num_actions != num_actions for _, policy in components):
            raise DimensionMismatchError("mixture components disagree on the action count")
        super().__init__(num_actions, label)
        self.components = components
        self.weights = weights

    def action_distribution(self, history):
        """Component distributions weighted by their posterior given the actions taken so far."""
        prefix = tuple(history)
        posterior = np.array([weight * policy.policy_factor(prefix) for weight, policy in self.components])
        if posterior.sum() <= 0.0:
            posterior = self.weights.copy()
        posterior = posterior / posterior.sum()
        probs = np.zeros(self.num_actions)
        for weight, (_, policy) in zip(posterior, self.components):
            if weight > 0.0:
                probs += weight * policy.action_distribution(prefix)
        return probs

    def _build_factor_table(self, num_obs, steps):
        return sum(weight * policy.factor_table(num_obs, steps) for weight, policy in self.components)


class ComposedPolicy(Policy):
    """``base`` through step ``h-1``, a uniform action at step ``h``, then a uniformly drawn core action sequence.

    Steps after the drawn sequence ends take uniform actions. ``switch_step = 0``
    skips both the base policy and the uniform step.
    """

    kind = "Composed"

    def __init__(self, base, switch_step, action_seqs, label=""):
        """Validate the sequence set."""
        if not action_seqs:
            raise ModelValidationError(f"empty action-sequence set after step {switch_step}")
        super().__init__(base.num_actions, label)
        self.base = base
        self.switch_step = switch_step
        self.action_seqs = tuple(tuple(seq) for seq in action_seqs)

    def describe(self):
        """Descriptor naming the base policy and the switch step."""
        return self.label or f"explore(h={self.switch_step},base={self.base.describe()})"

    def action_distribution(self, history):
        """Conditional action law at a step, given which sequences remain consistent."""
        step = (len(history) + 1) // 2
        uniform = np.full(self.num_actions, 1.0 / self.num_actions)
        if step < self.switch_step:
            return self.base.action_distribution(history)
        if step == self.switch_step:
            return uniform
        offset = step - self.switch_step - 1
        weights = np.ones(len(self.action_seqs))
        for index, seq in enumerate(self.action_seqs):
            for past in range(offset):
                taken = history[2 * (self.switch_step + past) + 1]
                if past < len(seq):
                    if seq[past] != taken:
                        weights[index] = 0.0
                        break
                else:
                    weights[index] /= self.num_actions
        if weights.sum() <= 0.0:
            return uniform
        weights = weights / weights.sum()
        probs = np.zeros(self.num_actions)
        for weight, seq in zip(weights, self.action_seqs):
            if offset < len(seq):
                probs[seq[offset]] += weight
            else:
                probs += weight * uniform
        return probs


def uniform_policy(num_actions):
    """The uniform policy."""
    return UniformPolicy(num_actions)


def random_policy(num_obs, num_actions, horizon, rng_seed, deterministic=False):
    """A random policy tabulated on every observable history up to ``horizon``.

    Args:
        num_obs (int): Observation count.
        num_actions (int): Action count.
        horizon (int): Last step the table covers.
        rng_seed: Seed or generator.
        deterministic (bool): Draw uniform actions instead of Dirichlet action distributions.

    Returns:
        Policy: A deterministic or stochastic table.
    """
    rng = as_generator(rng_seed)
    histories = [history for step in range(1, horizon + 1) for history in iter_histories(num_obs, num_actions, step)]
    check_capacity("random_policy", len(histories))
    if deterministic:
        actions = rng.integers(num_actions, size=len(histories))
        table = dict(zip(histories, actions.tolist()))
        return DeterministicTablePolicy(table, num_actions, label="random-deterministic")
    probs = rng.dirichlet(np.ones(num_actions), size=len(histories))
    probs = probs / probs.sum(axis=1, keepdims=True)
    return StochasticTablePolicy(dict(zip(histories, probs)), num_actions, label="random-stochastic")


def compose_exploration(policy, h, core):
    """``policy ∘_h Unif(A) ∘_{h+1} Unif(U_{A,h+1})`` for ``h`` in ``0..H-1``."""
    if not 0 <= h <= core.horizon - 1:
        raise ModelValidationError(f"exploration step {h} outside 0..{core.horizon - 1}")
    return ComposedPolicy(policy, h, core.action_seqs(h + 1))


def exploration_mixture(policy, core):
    """The uniform mixture over ``h`` of the composed exploration policies."""
    horizon = core.horizon
    return MixturePolicy(
        [(1.0 / horizon, compose_exploration(policy, h, core)) for h in range(horizon)],
        label=f"explore-mix(base={policy.describe()})",
    )


# --- Distributions, values, planning ---


@dataclass(frozen=True, eq=False)
class TrajectoryDist:
    """Exact law of ``tau_{h_max}`` with the do-probability and policy factor kept apart."""

    h_max: int
    num_obs: int
    num_actions: int
    do_probs: np.ndarray
    policy_factors: np.ndarray

    @cached_property
    def probs(self):
        """``P^pi(tau) = P(tau) * pi(tau)``."""
        return self.do_probs * self.policy_factors

    @classmethod
    def point_mass(cls, trajectory, num_obs, num_actions):
        """The distribution putting all mass on ``trajectory``."""
        size = num_trajectories(num_obs, num_actions, len(trajectory) // 2)
        probs = np.zeros(size)
        probs[trajectory_index(trajectory, num_obs, num_actions)] = 1.0
        return cls(len(trajectory) // 2, num_obs, num_actions, probs, np.ones(size))

    def total(self):
        """Total mass."""
        return float(self.probs.sum())

    def probability(self, trajectory):
        """``P^pi(tau)`` of one trajectory."""
        return float(self.probs[trajectory_index(trajectory, self.num_obs, self.num_actions)])

    def items(self):
        """Yield ``(trajectory, probability)`` pairs in index order."""
        return zip(iter_trajectories(self.num_obs, self.num_actions, self.h_max), self.probs)

    def to_csv(self, path):
        """Write ``trajectory,probability,do_probability,policy_factor`` rows."""
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["trajectory", "probability", "do_probability", "policy_factor"])
            for (trajectory, prob), do_prob, factor in zip(self.items(), self.do_probs, self.policy_factors):
                numbers = [repr(float(entry)) for entry in (prob, do_prob, factor)]
                writer.writerow([format_trajectory(trajectory), *numbers])


def trajectory_distribution(model, policy, h_max=None):
    """Exact ``P^pi`` over every trajectory of length ``h_max`` (default: the horizon).

    Raises:
        CapacityError: If ``(OA)^h_max`` exceeds the enumeration cap.
    """
    h_max = model.horizon if h_max is None else h_max
    if not 0 <= h_max <= model.horizon:
        raise ModelValidationError(f"h_max={h_max} outside 0..{model.horizon}")
    if policy.num_actions != model.num_actions:
        raise DimensionMismatchError("policy and model disagree on the action count")
    check_capacity("trajectory_distribution", num_trajectories(model.num_obs, model.num_actions, h_max))
    return TrajectoryDist(
        h_max,
        model.num_obs,
        model.num_actions,
        model.do_probabilities(h_max),
        policy.factor_table(model.num_obs, h_max),
    )


def value(model, policy):
    """Expected cumulative reward of ``policy`` in ``model``."""
    dist = trajectory_distribution(model, policy)
    return float(dist.probs @ model.trajectory_rewards())


def optimal_policy(model):
    """Exact optimal deterministic policy by backward induction over observable histories.

    The recursion carries ``W = P(tau_{h-1}, o_h) * V*(tau_{h-1}, o_h)`` so that no
    belief is normalized; ties are compared on ``V*`` and unreachable histories get action 0.

    Returns:
        tuple[DeterministicTablePolicy, float]: The greedy policy and its value.
    """
    obs, actions = model.num_obs, model.num_actions
    check_capacity("optimal_policy", num_trajectories(obs, actions, model.horizon))
    choices = {}
    future = None
    for step in range(model.horizon, 0, -1):
        reach = model.emission_joint(step).sum(axis=-1)
        q_values = reach[:, :, None] * model.rewards[step - 1][None, :, :]
        if future is not None:
            q_values = q_values + future.reshape(reach.shape[0], obs, actions, obs).sum(axis=-1)
        scale = np.where(reach > 0.0, reach, 1.0)
        choice = argmax_with_ties(q_values / scale[..., None], axis=-1)
        choices[step] = choice.ravel()
        future = np.take_along_axis(q_values, choice[..., None], axis=-1)[..., 0]
    best_value = float(future.sum())
    table = {}
    for step in range(1, model.horizon + 1):
        table.update(zip(iter_histories(obs, actions, step), choices[step].tolist()))
    policy = DeterministicTablePolicy(table, actions, label=f"optimal({model.name})" if model.name else "optimal")
    return policy, best_value


def _check_same_index(d1, d2):
    if (d1.h_max, d1.num_obs, d1.num_actions) != (d2.h_max, d2.num_obs, d2.num_actions):
        raise DimensionMismatchError("trajectory distributions are indexed by different trajectory sets")


def tv_distance(d1, d2):
    """Total variation distance ``1/2 * sum |p - q|``."""
    _check_same_index(d1, d2)
    return 0.5 * float(np.abs(d1.probs - d2.probs).sum())


def hellinger_sq(d1, d2):
    """Squared Hellinger distance ``sum (sqrt p - sqrt q)^2``."""
    _check_same_index(d1, d2)
    return float(((np.sqrt(d1.probs) - np.sqrt(d2.probs)) ** 2).sum())


def sample_trajectory(model, policy, rng_seed):
    """Draw one full trajectory from ``P^pi``; deterministic given the seed."""
    rng = as_generator(rng_seed)
    state = rng.choice(model.num_states, p=model.initial)
    history = []
    for step in range(model.horizon):
        obs = int(rng.choice(model.num_obs, p=model.emissions[step][:, state]))
        history.append(obs)
        action = int(rng.choice(model.num_actions, p=policy.action_distribution(tuple(history))))
        history.append(action)
        if step + 1 < model.horizon:
            state = rng.choice(model.num_states, p=model.transitions[step, action][:, state])
    return tuple(history)


def mdp_optimal_value(initial, transitions, rewards):
    """Finite-horizon optimal value of a fully observed MDP by backward induction.

    Args:
        initial (np.ndarray): Initial state law, shape ``(S,)``.
        transitions (np.ndarray): ``[h, a, s', s]`` for ``h`` in ``0..H-2``.
        rewards (np.ndarray): Expected rewards ``[h, s, a]`` for ``h`` in ``0..H-1``.

    Returns:
        float: The optimal value.
    """
    rewards = np.asarray(rewards, dtype=float)
    transitions = np.asarray(transitions, dtype=float)
    values = np.zeros(rewards.shape[1])
    for step in range(rewards.shape[0] - 1, -1, -1):
        q_values = rewards[step].copy()
        if step < rewards.shape[0] - 1:
            q_values += np.einsum("ats,t->sa", transitions[step], values)
        values = q_values.max(axis=1)
    return float(np.asarray(initial, dtype=float) @ values)


# --- Model classes ---


@dataclass(frozen=True, eq=False)
class ModelClass:
    """A finite model class with a designated ground truth and shared core tests."""

    members: tuple
    truth_index: int
    core: object
    name: str = ""

    def __post_init__(self):
        """Check shared dimensions and the truth index."""
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ModelValidationError("model class is empty")
        reference = self.members[0]
        shape = (reference.horizon, reference.num_obs, reference.num_actions)
        for member in self.members:
            if (member.horizon, member.num_obs, member.num_actions) != shape:
                raise DimensionMismatchError("class members disagree on horizon, observation or action counts")
        if not 0 <= self.truth_index < len(self.members):
            raise ModelValidationError(f"truth index {self.truth_index} out of range")
        if self.core.horizon != reference.horizon:
            raise DimensionMismatchError("core test set horizon differs from the class horizon")

    @property
    def truth(self):
        """The ground-truth member."""
        return self.members[self.truth_index]

    @property
    def horizon(self):
        """Shared horizon."""
        return self.members[0].horizon

    @property
    def num_obs(self):
        """Shared observation count."""
        return self.members[0].num_obs

    @property
    def num_actions(self):
        """Shared action count."""
        return self.members[0].num_actions

    def __len__(self):
        """Number of members."""
        return len(self.members)

    @cached_property
    def optimal(self):
        """``[(pi_theta, V_theta(pi_theta))]`` for every member."""
        return [optimal_policy(member) for member in self.members]

    @cached_property
    def truth_optimal_value(self):
        """``V*`` of the ground truth."""
        return self.optimal[self.truth_index][1]


# --- Files ---


def model_to_dict(model):
    """Serialize a model to the JSON file layout."""
    data = {
        "horizon": model.horizon,
        "num_states": model.num_states,
        "num_observations": model.num_obs,
        "num_actions": model.num_actions,
        "initial": model.initial.tolist(),
        "transitions": model.transitions.tolist(),
        "emissions": model.emissions.tolist(),
        "rewards": model.rewards.tolist(),
    }
    if model.name:
        data["name"] = model.name
    return data


def model_from_dict(data):
    """Validate ``data`` against the model schema and build a ``PomdpModel``."""
    schema = json.loads(_MODEL_SCHEMA_PATH.read_text(encoding="utf-8"))
    try:
        jsonschema.validate(data, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid model file: {exc.message}") from exc
    return PomdpModel(
        horizon=data["horizon"],
        num_states=data["num_states"],
        num_obs=data["num_observations"],
        num_actions=data["num_actions"],
        transitions=data["transitions"],
        emissions=data["emissions"],
        initial=data["initial"],
        rewards=data["rewards"],
        name=data.get("name", ""),
    )


def save_model(model, path):
    """Write a model as JSON."""
    Path(path).write_text(json.dumps(model_to_dict(model), indent=4) + "\n", encoding="utf-8")


def load_model(path):
    """Read and validate a model JSON file."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return model_from_dict(data)


def load_model_class(path):
    """Read a class file ``{"name", "truth_index", "window", "members": [model | relative path]}``."""
    from psrlab.representations import default_core_tests  # pylint: disable=import-outside-toplevel

    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    members = []
    for entry in data.get("members", []):
        if isinstance(entry, str):
            members.append(load_model(path.parent / entry))
        else:
            members.append(model_from_dict(entry))
    if not members:
        raise ConfigError(f"{path} lists no members")
    core = default_core_tests(members[0], int(data.get("window", 1)))
    return ModelClass(members, int(data.get("truth_index", 0)), core, name=data.get("name", path.stem))


def save_model_class(model_class, path, window):
    """Write a class file with inline members."""
    data = {
        "name": model_class.name,
        "truth_index": model_class.truth_index,
        "window": window,
        "members": [model_to_dict(member) for member in model_class.members],
    }
    Path(path).write_text(json.dumps(data, indent=4) + "\n", encoding="utf-8")
