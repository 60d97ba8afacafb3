"""Π-norms, fused norms and B-stability certificates.

Vectors indexed by futures ``tau_{h:H}`` use the same C order as full trajectories,
so a length-``(OA)^L`` vector is reshaped to ``(O, A) * L`` and reduced from the
last step backwards.
"""

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from psrlab.exceptions import DimensionMismatchError
from psrlab.metrics import psrlab_certification_duration_seconds
from psrlab.models import compose_exploration
from psrlab.representations import DUMMY_TEST, predictive_states
from psrlab.settings import get_app_settings
from psrlab.utils import as_generator, check_capacity, trajectory_index


def _future_steps(length, num_obs, num_actions):
    steps, size = 0, 1
    while size < length:
        size *= num_obs * num_actions
        steps += 1
    if size != length:
        raise DimensionMismatchError(f"length {length} is not a power of O*A={num_obs * num_actions}")
    return steps


def pi_norm(b, num_obs, num_actions):
    """``max_pi sum_tau pi(tau) |b(tau)|`` over policies acting on the futures ``tau_{h:H}``.

    Args:
        b (np.ndarray): Shape ``(N_future,)`` or ``(N_future, k)``; columns are evaluated independently.
        num_obs (int): Observation count.
        num_actions (int): Action count.

    Returns:
        float | np.ndarray: The Π-norm, per column for 2-D input.
    """
    values = np.abs(np.asarray(b, dtype=float))
    check_capacity("pi_norm", values.shape[0])
    tail = values.shape[1:]
    for _ in range(_future_steps(values.shape[0], num_obs, num_actions)):
        values = values.reshape(-1, num_obs, num_actions, *tail).max(axis=2).sum(axis=1)
    return float(values[0]) if not tail else values[0]


def pi_norm_argmax(b, num_obs, num_actions):
    """The maximizing deterministic future policy of :func:`pi_norm` as 0/1 trajectory weights."""
    values = np.abs(np.asarray(b, dtype=float))
    check_capacity("pi_norm", values.shape[0])
    choices = []
    for _ in range(_future_steps(values.shape[0], num_obs, num_actions)):
        block = values.reshape(-1, num_obs, num_actions)
        choices.append(np.argmax(block, axis=2))
        values = block.max(axis=2).sum(axis=1)
    weights = np.ones(1)
    for choice in reversed(choices):
        onehot = np.zeros(choice.shape + (num_actions,))
        np.put_along_axis(onehot, choice[..., None], 1.0, axis=-1)
        weights = (weights[:, None, None] * onehot).ravel()
    return weights


def sup_tv_distance(p, q, num_obs, num_actions):
    """``sup_pi D_TV(P^pi_theta, P^pi_bar)`` from do-probability vectors ``p`` and ``q``."""
    return 0.5 * pi_norm(np.asarray(p) - np.asarray(q), num_obs, num_actions)


def _tree_value(tests, magnitudes, exclusive):
    """Evaluate the observable-prefix tree of ``tests``.

    A node's value is its own magnitude combined with ``max_a sum_o`` of its children:
    the larger of the two when ``exclusive`` (prefix-free selection), their sum otherwise.
    """
    children = {}
    nodes = set()
    for test in tests:
        for end in range(1, len(test) + 1, 2):
            node = test[:end]
            nodes.add(node)
            if end > 1:
                children.setdefault(node[:-2], set()).add(node)
    values = {}
    for node in sorted(nodes, key=len, reverse=True):
        branches = {}
        for child in children.get(node, ()):
            branches[child[-2]] = branches.get(child[-2], 0.0) + values[child]
        branch = max(branches.values(), default=0.0)
        own = magnitudes.get(node, 0.0)
        values[node] = max(own, branch) if exclusive else own + branch
    return sum(value for node, value in values.items() if len(node) == 1)


def general_pi_norm(vector, core, step):
    """Π-norm on ``U_h``: the best policy-weighted sum over prefix-free subsets of the tests."""
    tests = core.tests_at(step)
    vector = np.abs(np.asarray(vector, dtype=float))
    if tests == (DUMMY_TEST,):
        return float(vector[0])
    return _tree_value(tests, dict(zip(tests, vector.tolist())), exclusive=True)


def fused_norm(q, core, step):
    """The fused norm on ``U_h``.

    Returns:
        tuple[float, float, float]: ``(one_two, pi_prime, fused)`` where ``one_two`` is the ℓ1-within /
        ℓ2-across action-sequence group norm, ``pi_prime`` the Π'-norm on the prefix-free tests and
        ``fused`` their maximum.
    """
    tests = core.tests_at(step)
    magnitudes = np.abs(np.asarray(q, dtype=float))
    if magnitudes.shape != (len(tests),):
        raise DimensionMismatchError(f"vector of length {magnitudes.shape} does not match |U_{step}|={len(tests)}")
    if tests == (DUMMY_TEST,):
        value = float(magnitudes[0])
        return value, value, value
    groups = {}
    for test, magnitude in zip(tests, magnitudes.tolist()):
        groups[test[1::2]] = groups.get(test[1::2], 0.0) + magnitude
    one_two = math.sqrt(sum(total**2 for total in groups.values()))
    index = core.index(step)
    prefix_free = core.prefix_free(step)
    pi_prime = _tree_value(prefix_free, {test: float(magnitudes[index[test]]) for test in prefix_free}, exclusive=False)
    return one_two, pi_prime, max(one_two, pi_prime)


# --- Certification ---


@dataclass
class StepNorm:
    """Per-step operator values."""

    step: int
    l1_to_pi: float
    sampled_ratio: float


@dataclass
class StabilityReport:
    """Certified bracket ``[lambda_lo, lambda_hi]`` for the B-stability parameter.

    ``bounds`` maps a named theoretical bound to ``{"value", "lower_consistent", "upper_within"}``.
    """

    provenance: str
    steps: list
    lambda_lo: float
    lambda_hi: float
    exact: bool
    r_b: float
    max_action_seqs: int
    bounds: dict = field(default_factory=dict)
    weak_ratio: float = None

    @property
    def per_step(self):
        """``{h: L_h}``."""
        return {entry.step: entry.l1_to_pi for entry in self.steps}

    def to_dict(self):
        """Plain-data form for JSON export."""
        return asdict(self)

    def to_json(self):
        """JSON text of :meth:`to_dict`."""
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_table(self):
        """Human-readable summary table."""
        lines = [
            f"provenance      {self.provenance}",
            f"lambda bracket  [{self.lambda_lo:.6f}, {self.lambda_hi:.6f}]{' (exact)' if self.exact else ''}",
            f"R_B             {self.r_b:.6f}",
            f"U_A             {self.max_action_seqs}",
        ]
        if self.weak_ratio is not None:
            lines.append(f"weak ratio      {self.weak_ratio:.6f}")
        lines.append("step  l1->pi      sampled")
        lines.extend(f"{entry.step:<5d} {entry.l1_to_pi:<11.6f} {entry.sampled_ratio:.6f}" for entry in self.steps)
        for name, bound in sorted(self.bounds.items()):
            lines.append(
                f"bound {name:<14s} {bound['value']:.6f} lower_ok={bound['lower_consistent']} "
                f"upper_ok={bound['upper_within']}"
            )
        return "\n".join(lines)


def _check_core(brep, core):
    if core is None:
        return brep.core
    for step in range(1, brep.horizon + 2):
        if core.tests_at(step) != brep.core.tests_at(step):
            raise DimensionMismatchError(f"core tests at step {step} differ from the representation's")
    return core


def operator_norms(brep, step):
    """``pi_norm(B_{H:h} e_t)`` for every ``t`` in ``U_h``."""
    core = brep.core
    futures = brep.future_matrix(step, np.eye(core.size(step)))
    return np.atleast_1d(pi_norm(futures, core.num_obs, core.num_actions))


def _theoretical_bounds(brep, max_action_seqs):
    meta = brep.meta
    root = math.sqrt(max_action_seqs)
    bounds = {}
    if brep.provenance == "revealing":
        if meta.get("alpha_rev", 0.0) > 0.0:
            bounds["revealing_l2"] = math.sqrt(meta["num_states"]) / meta["alpha_rev"]
        if meta.get("alpha_rev_l1", 0.0) > 0.0:
            bounds["revealing_l1"] = root / meta["alpha_rev_l1"]
    elif brep.provenance == "future-sufficient":
        bounds["future_sufficient"] = root * meta["nu"]
    elif brep.provenance == "decodable":
        bounds["decodable"] = 1.0
    elif brep.provenance == "regular-psr" and np.isfinite(meta.get("alpha_psr_inv", np.inf)):
        bounds["regular_psr"] = root * meta["alpha_psr_inv"]
    return bounds


def certify_stability(brep, core=None, n_samples=None, rng_seed=0):
    """Certify a bracket for the B-stability parameter of ``brep``.

    ``L_h`` is the exact ℓ1→Π norm of ``B_{H:h}``, attained at a test indicator, and
    every indicator has unit fused norm, so ``max_h L_h`` is a lower bound; the
    ℓ1/fused norm equivalence turns it into the upper bound ``sqrt(U_A) * max_h L_h``.
    Random Gaussian directions refine the lower end.

    Args:
        brep (BRep): The representation.
        core (CoreTestSet | None): Must match ``brep.core`` when given.
        n_samples (int | None): Random directions per step; defaults to ``weak_stability_samples``.
        rng_seed: Seed or generator for the random directions.

    Returns:
        StabilityReport: The certificate.
    """
    start = time.monotonic()
    core = _check_core(brep, core)
    n_samples = get_app_settings()["weak_stability_samples"] if n_samples is None else n_samples
    rng = as_generator(rng_seed)
    steps = []
    for step in range(1, brep.horizon + 1):
        norms = operator_norms(brep, step)
        sampled = 0.0
        if n_samples:
            directions = rng.standard_normal((core.size(step), n_samples))
            numerators = np.atleast_1d(pi_norm(brep.future_matrix(step, directions), core.num_obs, core.num_actions))
            for column, numerator in enumerate(numerators):
                denominator = fused_norm(directions[:, column], core, step)[2]
                if denominator > 0.0:
                    sampled = max(sampled, float(numerator) / denominator)
        steps.append(StepNorm(step, float(norms.max()), sampled))
    exact_lower = max(entry.l1_to_pi for entry in steps)
    max_action_seqs = core.max_action_seqs
    lambda_hi = math.sqrt(max_action_seqs) * exact_lower
    lambda_lo = min(max(exact_lower, max(entry.sampled_ratio for entry in steps)), lambda_hi)
    r_b = 1.0
    for step in range(1, brep.horizon + 1):
        if brep.ops[step].size:
            r_b = max(r_b, float(np.abs(brep.ops[step]).sum(axis=(0, 1, 2)).max()))
    bounds = {
        name: {
            "value": value,
            "lower_consistent": lambda_lo <= value + 1e-9,
            "upper_within": lambda_hi <= value + 1e-9,
        }
        for name, value in _theoretical_bounds(brep, max_action_seqs).items()
    }
    report = StabilityReport(
        provenance=brep.provenance,
        steps=steps,
        lambda_lo=lambda_lo,
        lambda_hi=lambda_hi,
        exact=max_action_seqs == 1,
        r_b=r_b,
        max_action_seqs=max_action_seqs,
        bounds=bounds,
    )
    psrlab_certification_duration_seconds.labels(provenance=brep.provenance).observe(time.monotonic() - start)
    return report


# --- Weak stability ---


@dataclass
class WeakStabilityResult:
    """Outcome of a sampled weak-stability check."""

    worst_ratio: float
    worst_fused_ratio: float
    implication_holds: bool
    violations: int
    samples: int


def _weak_ratio(brep, step, p, q):
    core = brep.core
    gap = float(np.sqrt(np.sum((np.sqrt(p) - np.sqrt(q)) ** 2)))
    scale = math.sqrt(2.0 * (general_pi_norm(p, core, step) + general_pi_norm(q, core, step)))
    if gap * scale <= 0.0:
        return 0.0
    numerator = pi_norm(brep.future_matrix(step, p - q), core.num_obs, core.num_actions)
    return numerator / (scale * gap)


def check_weak_stability(brep, core=None, pairs=(), claimed_lambda=None):
    """Worst sampled ratio ``||B_{H:h}(p - q)||_Π / (sqrt(2(||p||_Π + ||q||_Π)) ||sqrt p - sqrt q||_2)``.

    Each pair ``(h, p, q)`` is also split into the positive and negative parts of ``p - q``;
    the fused-norm ratio of ``p - q`` never exceeds ``sqrt(2 U_A)`` times the larger weak
    ratio of those parts, and ``implication_holds`` reports whether that was observed.

    Args:
        brep (BRep): The representation.
        core (CoreTestSet | None): Must match ``brep.core`` when given.
        pairs (Iterable): ``(step, p, q)`` triples of nonnegative vectors over ``U_h``.
        claimed_lambda (float | None): Ratios above it are counted as violations.
    """
    core = _check_core(brep, core)
    factor = math.sqrt(2.0 * core.max_action_seqs)
    worst, worst_fused, holds, violations, count = 0.0, 0.0, True, 0, 0
    for step, p, q in pairs:
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if np.any(p < 0.0) or np.any(q < 0.0):
            raise DimensionMismatchError("weak stability pairs must be entrywise nonnegative")
        count += 1
        diff = p - q
        zero = np.zeros_like(diff)
        ratios = [_weak_ratio(brep, step, p, q)]
        ratios.append(_weak_ratio(brep, step, np.maximum(diff, 0.0), zero))
        ratios.append(_weak_ratio(brep, step, np.maximum(-diff, 0.0), zero))
        worst = max(worst, *ratios)
        if claimed_lambda is not None:
            violations += sum(ratio > claimed_lambda + 1e-9 for ratio in ratios)
        denominator = fused_norm(diff, core, step)[2]
        if denominator > 0.0:
            fused_ratio = pi_norm(brep.future_matrix(step, diff), core.num_obs, core.num_actions) / denominator
            worst_fused = max(worst_fused, fused_ratio)
            holds = holds and fused_ratio <= factor * max(ratios[1:]) + 1e-9
    return WeakStabilityResult(worst, worst_fused, holds, violations, count)


def weak_stability_pairs(core, n_samples, rng_seed, models=()):
    """Dirichlet-scaled nonnegative pairs, plus predictive-state pairs from consecutive ``models``."""
    rng = as_generator(rng_seed)
    pairs = []
    for _ in range(n_samples):
        step = int(rng.integers(1, core.horizon + 1))
        size = core.size(step)
        p = rng.dirichlet(np.ones(size)) * rng.uniform(0.0, core.max_action_seqs)
        q = rng.dirichlet(np.ones(size)) * rng.uniform(0.0, core.max_action_seqs)
        pairs.append((step, p, q))
    for first, second in zip(models, models[1:]):
        for step in range(1, core.horizon + 1):
            left = predictive_states(first, core, step)
            right = predictive_states(second, core, step)
            row = int(rng.integers(left.shape[0]))
            pairs.append((step, left[row], right[row]))
    return pairs


# --- Error decomposition ---


@dataclass
class BErrors:
    """Per-step B-errors of ``theta`` against ``theta_bar``.

    ``per_step[h]`` holds ``E_h(tau_{h-1})`` for every history in index order and
    ``expected[h]`` / ``expected_sq[h]`` its mean / mean square under ``(theta_bar, pi)``.
    """

    e0: float
    per_step: dict
    expected: dict
    expected_sq: dict
    num_obs: int
    num_actions: int

    def at(self, tau):
        """``E_h(tau)`` for a history ``tau = tau_{h-1}``."""
        step = len(tau) // 2 + 1
        return float(self.per_step[step][trajectory_index(tau, self.num_obs, self.num_actions)])

    @property
    def decomposition_bound(self):
        """``E_0 + sum_h E[E_h]``."""
        return self.e0 + sum(self.expected.values())


def _shared_core(brep_theta, brep_bar):
    for step in range(1, brep_theta.horizon + 2):
        if brep_theta.core.tests_at(step) != brep_bar.core.tests_at(step):
            raise DimensionMismatchError(f"representations disagree on the core tests at step {step}")
    return brep_theta.core


def _history_weights(model_bar, policy, step):
    """Law of ``tau_{h-1}`` under ``(theta_bar, pi)``."""
    return model_bar.do_probabilities(step - 1) * policy.factor_table(model_bar.num_obs, step - 1)


def b_errors(brep_theta, brep_bar, model_bar, policy):
    """B-errors ``E_0`` and ``E_h(tau_{h-1})`` for ``h`` in ``1..H``.

    The inner maximum over one-step rules is taken per observation, which is exact
    because the objective is linear in each ``pi_h(. | o)``.
    """
    core = _shared_core(brep_theta, brep_bar)
    obs, actions = core.num_obs, core.num_actions
    e0 = 0.5 * pi_norm(brep_theta.future_matrix(1, brep_theta.q0 - brep_bar.q0), obs, actions)
    per_step, expected, expected_sq = {}, {}, {}
    for step in range(1, core.horizon + 1):
        states = predictive_states(model_bar, core, step)
        diff = brep_theta.ops[step] - brep_bar.ops[step]
        moved = np.einsum("oaij,nj->noai", diff, states)
        flat = moved.reshape(-1, core.size(step + 1)).T
        norms = np.atleast_1d(pi_norm(brep_theta.future_matrix(step + 1, flat), obs, actions))
        values = 0.5 * norms.reshape(states.shape[0], obs, actions).max(axis=2).sum(axis=1)
        weights = _history_weights(model_bar, policy, step)
        per_step[step] = values
        expected[step] = float(weights @ values)
        expected_sq[step] = float(weights @ values**2)
    return BErrors(e0, per_step, expected, expected_sq, obs, actions)


def _trajectory_law(brep, policy):
    probs = np.maximum(brep.do_probabilities(), 0.0)
    return probs * policy.factor_table(brep.core.num_obs, brep.horizon)


def decomposition_check(brep_theta, brep_bar, model_bar, policy):
    """``(D_TV, E_0 + sum_h E[E_h], slack)`` for the performance decomposition."""
    errors = b_errors(brep_theta, brep_bar, model_bar, policy)
    tv = 0.5 * float(np.abs(_trajectory_law(brep_theta, policy) - _trajectory_law(brep_bar, policy)).sum())
    bound = errors.decomposition_bound
    return tv, bound, bound - tv


@dataclass
class HellingerCheck:
    """Both sides of the squared-B-error bounds, keyed by step ``0..H``."""

    lhs: dict
    rhs: dict
    lambda_used: float

    @property
    def slack(self):
        """``rhs - lhs`` per step."""
        return {step: self.rhs[step] - self.lhs[step] for step in self.lhs}

    @property
    def worst_slack(self):
        """Smallest slack."""
        return min(self.slack.values())


def _hellinger(p, q):
    return float(((np.sqrt(p) - np.sqrt(q)) ** 2).sum())


def hellinger_domination_check(brep_theta, brep_bar, model_bar, policy, core=None, lam=None):
    """Compare squared B-errors with Hellinger distances under the exploration policies.

    For ``h`` in ``1..H-1``: ``E[E_h^2] <= 4 L^2 A U_A (D^2(pi_{h,exp}) + D^2(pi_{h-1,exp}))``;
    for ``h = H``: ``E[E_H^2] <= 2 (L + 1)^2 D^2(pi_{H-1,exp})``; for ``h = 0``:
    ``E_0^2 <= L^2 U_A D^2(pi_{0,exp})``, where ``L`` is the stability parameter of ``theta``.

    Args:
        lam (float | None): Stability parameter; defaults to the certified upper end for ``brep_theta``.
    """
    core = _check_core(brep_theta, core)
    _shared_core(brep_theta, brep_bar)
    if lam is None:
        lam = certify_stability(brep_theta, n_samples=0).lambda_hi
    horizon, actions = core.horizon, core.num_actions
    unique = core.max_action_seqs
    distances = {}
    for step in range(horizon):
        explore = compose_exploration(policy, step, core)
        distances[step] = _hellinger(_trajectory_law(brep_theta, explore), _trajectory_law(brep_bar, explore))
    errors = b_errors(brep_theta, brep_bar, model_bar, policy)
    lhs = {0: errors.e0**2}
    rhs = {0: lam**2 * unique * distances[0]}
    for step in range(1, horizon + 1):
        lhs[step] = errors.expected_sq[step]
        if step < horizon:
            rhs[step] = 4.0 * lam**2 * actions * unique * (distances[step] + distances[step - 1])
        else:
            rhs[step] = 2.0 * (lam + 1.0) ** 2 * distances[horizon - 1]
    return HellingerCheck(lhs, rhs, lam)


# --- Well-conditioning ---


@dataclass
class WellConditioning:
    """Inverse well-conditioning constants."""

    gamma1_inv: float
    gamma2_inv: float


def well_conditioned_check(brep, core=None):
    """``gamma1^-1 = max_h max_t ||B_{H:h} e_t||_Π`` and ``gamma2^-1 = max_h max_t sum_o max_a ||B_h(o,a) e_t||_1``."""
    core = _check_core(brep, core)
    gamma1 = max(float(operator_norms(brep, step).max()) for step in range(1, core.horizon + 1))
    gamma2 = 0.0
    for step in range(1, core.horizon + 1):
        column_norms = np.abs(brep.ops[step]).sum(axis=2)
        gamma2 = max(gamma2, float(column_norms.max(axis=1).sum(axis=0).max()))
    return WellConditioning(gamma1, gamma2)
