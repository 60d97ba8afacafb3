"""Numerical checks for the decorrelation inequalities behind the learners' guarantees.

Every check returns the two sides and a signed slack (``rhs - lhs``); a negative slack
beyond round-off falsifies the inequality on that instance.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from psrlab.exceptions import DimensionMismatchError, ModelValidationError
from psrlab.utils import as_generator, check_capacity, norm_1to1, numerical_rank


@dataclass
class InequalityCheck:
    """Both sides of an inequality; ``lhs``/``rhs`` may be per-round arrays."""

    lhs: object
    rhs: object
    slack: float

    def to_dict(self):
        """JSON-ready view."""
        return {"lhs": np.asarray(self.lhs).tolist(), "rhs": np.asarray(self.rhs).tolist(), "slack": self.slack}


@dataclass(frozen=True, eq=False)
class EluderInstance:
    """Vectors ``x_{k,i}``, ``y_{k,j,r}`` and distributions ``q_k`` over the index set.

    ``f_k(x) = max_r sum_j |<x, y_{k,j,r}>|``. ``xs`` has shape ``(K, I, d)``, or ``(I, d)`` when the
    points are shared by every round. With ``rule_weights`` of shape ``(R, J)`` the rules are
    reweightings ``y_{k,j,r} = w_{r,j} y_{k,j}`` and ``ys`` has shape ``(K, J, d)``; otherwise ``ys``
    has shape ``(K, J, R, d)``.
    """

    xs: np.ndarray
    ys: np.ndarray
    qs: np.ndarray
    rule_weights: np.ndarray = None

    def __post_init__(self):
        """Check shapes and that each ``q_k`` is a distribution."""
        xs, ys, qs = (np.asarray(a, dtype=float) for a in (self.xs, self.ys, self.qs))
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "qs", qs)
        if self.rule_weights is not None:
            weights = np.asarray(self.rule_weights, dtype=float)
            if np.any(weights < 0.0) or weights.ndim != 2 or weights.shape[1] != ys.shape[1] or ys.ndim != 3:
                raise DimensionMismatchError("rule weights must be nonnegative with one column per j")
            object.__setattr__(self, "rule_weights", weights)
        elif ys.ndim != 4:
            raise DimensionMismatchError("ys must have shape (K, J, R, d)")
        rounds = ys.shape[0]
        if xs.ndim == 3 and xs.shape[0] != rounds:
            raise DimensionMismatchError("xs and ys disagree on the number of rounds")
        if xs.shape[-1] != ys.shape[-1]:
            raise DimensionMismatchError("xs and ys disagree on the dimension")
        if qs.shape != (rounds, xs.shape[-2]):
            raise DimensionMismatchError(f"qs has shape {qs.shape}, expected {(rounds, xs.shape[-2])}")
        if np.any(qs < 0.0) or np.any(np.abs(qs.sum(axis=1) - 1.0) > 1e-9):
            raise ModelValidationError("every q_k must be a probability vector")

    @property
    def rounds(self):
        """``K``."""
        return self.ys.shape[0]

    @property
    def dim(self):
        """Ambient dimension ``d``."""
        return self.xs.shape[-1]

    @property
    def shared_points(self):
        """True when every round uses the same points."""
        return self.xs.ndim == 2

    def points(self, k):
        """``x_{k,i}`` for every ``i``."""
        return self.xs if self.shared_points else self.xs[k]

    def f(self, k, x):
        """``f_k`` at points ``x`` of shape ``(..., d)``."""
        return self._f_all(np.asarray(x, dtype=float), rounds=[k])[0]

    def _f_all(self, x, rounds=None):
        ys = self.ys if rounds is None else self.ys[rounds]
        if self.rule_weights is None:
            inner = np.abs(np.einsum("...d,kjrd->k...jr", x, ys))
            return inner.sum(axis=-2).max(axis=-1)
        inner = np.abs(np.einsum("...d,kjd->k...j", x, ys))
        return (inner @ self.rule_weights.T).max(axis=-1)

    def value_table(self):
        """``G[k, t, i] = f_k(x_{t,i})``."""
        if self.shared_points:
            values = self._f_all(self.xs)
            return np.broadcast_to(values[:, None, :], (self.rounds, self.rounds, values.shape[1]))
        return self._f_all(self.xs)

    def diagonal(self, table=None):
        """``E_{i~q_t}[f_t(x_{t,i})]`` per round."""
        table = self.value_table() if table is None else table
        rounds = np.arange(self.rounds)
        return np.einsum("ti,ti->t", self.qs, table[rounds, rounds])

    def betas(self, table=None):
        """``beta_k = sum_{t<k} E_{i~q_t}[f_k(x_{t,i})^2]``, the tightest admissible precondition."""
        table = self.value_table() if table is None else table
        per_pair = np.einsum("ti,kti->kt", self.qs, table**2)
        return np.array([per_pair[k, :k].sum() for k in range(self.rounds)])

    def radius_x(self):
        """``R_x = sqrt(max_k E_{i~q_k} ||x_{k,i}||^2)``."""
        norms = (self.xs**2).sum(axis=-1)
        per_round = self.qs @ norms if self.shared_points else np.einsum("ki,ki->k", self.qs, norms)
        return math.sqrt(float(per_round.max()))

    def radius_y(self):
        """``R_y = max_{k,r} sum_j ||y_{k,j,r}||_2``."""
        norms = np.linalg.norm(self.ys, axis=-1)
        if self.rule_weights is None:
            return float(norms.sum(axis=1).max())
        return float((norms @ self.rule_weights.T).max())

    def lipschitz_l1(self):
        """A constant ``L`` with ``f_k(x) <= L ||x||_1`` for every ``k``."""
        norms = np.abs(self.ys).max(axis=-1)
        if self.rule_weights is None:
            return float(norms.sum(axis=1).max())
        return float((norms @ self.rule_weights.T).max())

    def to_dict(self):
        """Serialize for regression corpora."""
        data = {"xs": self.xs.tolist(), "ys": self.ys.tolist(), "qs": self.qs.tolist()}
        if self.rule_weights is not None:
            data["rule_weights"] = self.rule_weights.tolist()
        return data

    @classmethod
    def from_dict(cls, data):
        """Inverse of :meth:`to_dict`."""
        return cls(np.array(data["xs"]), np.array(data["ys"]), np.array(data["qs"]), data.get("rule_weights"))


def _as_check(lhs, rhs):
    lhs, rhs = np.asarray(lhs, dtype=float), np.asarray(rhs, dtype=float)
    return InequalityCheck(lhs, rhs, float((rhs - lhs).min()) if lhs.size else 0.0)


def eluder_l2_check(instance, M):
    """The generalized ℓ2-Eluder bound at every round ``k``.

    ``sum_{t<=k} M ∧ E[f_t(x_{t,i})] <= sqrt(2d (M^2 k + sum_{t<=k} beta_t) log(1 + k R_x^2 R_y^2 / (d M^2)))``
    with ``beta`` computed from the instance itself.
    """
    if M <= 0:
        raise ModelValidationError("M must be positive")
    table = instance.value_table()
    rounds = np.arange(1, instance.rounds + 1)
    lhs = np.cumsum(np.minimum(M, instance.diagonal(table)))
    d = instance.dim
    growth = (instance.radius_x() * instance.radius_y()) ** 2 / (d * M**2)
    rhs = np.sqrt(2.0 * d * (M**2 * rounds + np.cumsum(instance.betas(table))) * np.log1p(rounds * growth))
    return _as_check(lhs, rhs)


def eluder_corollary_check(instance, L=None):
    """The ℓ1-Lipschitz form ``sum 1 ∧ E[f_t] <= sqrt(4 d (k + sum beta_t) log(1 + k d L max ||x||_1))``.

    ``d`` is the span dimension of all points; ``L`` defaults to :meth:`EluderInstance.lipschitz_l1`.
    """
    L = instance.lipschitz_l1() if L is None else L
    table = instance.value_table()
    rounds = np.arange(1, instance.rounds + 1)
    points = instance.xs.reshape(-1, instance.dim)
    d = span_dimension(points)
    lhs = np.cumsum(np.minimum(1.0, instance.diagonal(table)))
    radius = float(np.abs(points).sum(axis=1).max()) if points.size else 0.0
    rhs = np.sqrt(4.0 * d * (rounds + np.cumsum(instance.betas(table))) * np.log1p(rounds * d * L * radius))
    return _as_check(lhs, rhs)


def _check_psd(matrix, position):
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatchError(f"Phi_{position} is not square")
    scale = max(1.0, float(np.abs(matrix).max(initial=0.0)))
    if np.abs(matrix - matrix.T).max(initial=0.0) > 1e-9 * scale:
        raise ModelValidationError(f"Phi_{position} is not symmetric")
    if matrix.size and np.linalg.eigvalsh(matrix).min() < -1e-9 * scale:
        raise ModelValidationError(f"Phi_{position} is not positive semidefinite")
    return matrix


def elliptical_potential_check(phis, lambda0):
    """``sum_k min{1, tr(V_k^{-1/2} Phi_k V_k^{-1/2})} <= 2d log(1 + sum_k tr(Phi_k) / (d lambda0))``.

    ``V_k = lambda0 I + sum_{t<k} Phi_t``.

    Raises:
        ModelValidationError: If some ``Phi_k`` is not symmetric positive semidefinite.
    """
    if lambda0 <= 0:
        raise ModelValidationError("lambda0 must be positive")
    phis = [_check_psd(phi, k) for k, phi in enumerate(phis, start=1)]
    if not phis:
        return InequalityCheck(0.0, 0.0, 0.0)
    d = phis[0].shape[0]
    gram = lambda0 * np.eye(d)
    lhs = 0.0
    total_trace = 0.0
    for phi in phis:
        if phi.shape != (d, d):
            raise DimensionMismatchError("every Phi_k must share the dimension")
        lhs += min(1.0, float(np.trace(linalg.solve(gram, phi, assume_a="pos"))))
        total_trace += float(np.trace(phi))
        gram = gram + phi
    rhs = 2.0 * d * math.log1p(total_trace / (d * lambda0))
    return InequalityCheck(lhs, rhs, rhs - lhs)


@dataclass(frozen=True, eq=False)
class DecouplingInstance:
    """Shared points ``x_i`` (shape ``(I, n)``), per-model ``y_{theta,j,r}`` (``(Θ, J, R, n)``), ``q_theta`` and ``mu``."""

    xs: np.ndarray
    ys: np.ndarray
    qs: np.ndarray
    mu: np.ndarray

    def values(self):
        """``F[theta, i] = f_theta(x_i)``."""
        inner = np.abs(np.einsum("id,kjrd->kijr", np.asarray(self.xs, float), np.asarray(self.ys, float)))
        return inner.sum(axis=2).max(axis=-1)


def decoupling_check(instance):
    """``E_{theta~mu} E_{i~q_theta}[f_theta(x_i)] <= sqrt(d_X E_{theta,theta'~mu} E_{i~q_theta'}[f_theta(x_i)^2])``."""
    values = instance.values()
    mu, qs = np.asarray(instance.mu, float), np.asarray(instance.qs, float)
    if qs.shape != values.shape or mu.shape != (values.shape[0],):
        raise DimensionMismatchError("mu and q must match the models and points")
    lhs = float(mu @ np.einsum("ki,ki->k", qs, values))
    mixed_q = mu @ qs
    d_x = span_dimension(instance.xs)
    rhs = math.sqrt(d_x * float(mu @ (values**2) @ mixed_q))
    return InequalityCheck(lhs, rhs, rhs - lhs)


def span_dimension(xs):
    """Numerical dimension of the span of the rows of ``xs``."""
    xs = np.asarray(xs, dtype=float)
    return numerical_rank(xs) if xs.size else 0


@dataclass
class BarycentricSpanner:
    """``x_i = F v_i`` with ``F`` built from at most ``d`` input vectors, zero-padded to ``d`` columns."""

    F: np.ndarray
    coefficients: np.ndarray
    indices: tuple
    approximation: float = 2.0

    @property
    def max_coefficient(self):
        """``max_i ||v_i||_inf``."""
        return float(np.abs(self.coefficients).max(initial=0.0))

    def residual(self, xs):
        """``max_i ||x_i - F v_i||_inf``."""
        xs = np.asarray(xs, dtype=float)
        return float(np.abs(xs - self.coefficients @ self.F.T).max(initial=0.0))

    def norm_1to1(self):
        """``||F||_{1->1}``."""
        return norm_1to1(self.F)


def barycentric_spanner(xs, d, approximation=2.0, max_swaps=10_000):
    """Approximate barycentric spanner of the rows of ``xs`` by determinant swaps.

    Columns of a basis are replaced by input points while some point raises ``|det|`` by more
    than ``approximation``; at the fixed point every coefficient is bounded by it.

    Returns:
        BarycentricSpanner: ``F`` of shape ``(n, d)`` and coefficients of shape ``(len(xs), d)``.

    Raises:
        ModelValidationError: If the span dimension exceeds ``d``.
    """
    xs = np.asarray(xs, dtype=float)
    count, n = xs.shape
    rank = span_dimension(xs)
    if rank > d:
        raise ModelValidationError(f"span dimension {rank} exceeds d={d}")
    if rank == 0:
        return BarycentricSpanner(np.zeros((n, d)), np.zeros((count, d)), (), approximation)
    _, _, vt = np.linalg.svd(xs, full_matrices=False)
    coords = xs @ vt[:rank].T
    basis = np.eye(rank)
    chosen = [None] * rank
    for column in range(rank):
        ratios = np.abs(np.linalg.solve(basis, coords.T)[column])
        best = int(np.argmax(ratios))
        basis[:, column] = coords[best]
        chosen[column] = best
    for _ in range(max_swaps):
        ratios = np.abs(np.linalg.solve(basis, coords.T))
        column, best = np.unravel_index(int(np.argmax(ratios)), ratios.shape)
        if ratios[column, best] <= approximation:
            break
        basis[:, column] = coords[best]
        chosen[column] = int(best)
    coefficients = np.zeros((count, d))
    coefficients[:, :rank] = np.linalg.solve(basis, coords.T).T
    F = np.zeros((n, d))
    F[:, :rank] = xs[chosen].T
    return BarycentricSpanner(F, coefficients, tuple(chosen), approximation)


# --- Random instances ---


def random_eluder_instance(rng_seed, max_dim=5, max_rounds=50):
    """Random instance with ``d <= max_dim`` and ``K <= max_rounds``; points may be low rank."""
    rng = as_generator(rng_seed)
    d = int(rng.integers(1, max_dim + 1))
    rounds = int(rng.integers(1, max_rounds + 1))
    points, terms, rules = (int(rng.integers(1, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 4)))
    rank = int(rng.integers(1, d + 1))
    basis = rng.normal(size=(rank, d))
    xs = rng.normal(size=(rounds, points, rank)) @ basis
    ys = rng.normal(size=(rounds, terms, rules, d)) * rng.uniform(0.0, 1.0)
    qs = rng.dirichlet(np.ones(points), size=rounds)
    return EluderInstance(xs, ys, qs)


def random_decoupling_instance(rng_seed, max_dim=6, max_models=6):
    """Random decoupling instance with a possibly rank-deficient point set."""
    rng = as_generator(rng_seed)
    n = int(rng.integers(1, max_dim + 1))
    models = int(rng.integers(1, max_models + 1))
    points, terms, rules = (int(rng.integers(1, 8)), int(rng.integers(1, 4)), int(rng.integers(1, 4)))
    rank = int(rng.integers(1, n + 1))
    xs = rng.normal(size=(points, rank)) @ rng.normal(size=(rank, n))
    ys = rng.normal(size=(models, terms, rules, n))
    qs = rng.dirichlet(np.ones(points), size=models)
    mu = rng.dirichlet(np.ones(models))
    return DecouplingInstance(xs, ys, qs, mu)


def random_psd_sequence(rng_seed, max_dim=5, max_length=50):
    """Random sequence of PSD matrices ``G G^T`` with random rank and scale."""
    rng = as_generator(rng_seed)
    d = int(rng.integers(1, max_dim + 1))
    length = int(rng.integers(1, max_length + 1))
    phis = []
    for _ in range(length):
        factor = rng.normal(size=(d, int(rng.integers(1, d + 1)))) * rng.exponential(1.0)
        phis.append(factor @ factor.T)
    return phis, float(rng.uniform(0.1, 2.0))


# --- Instances from learner runs ---


def deterministic_future_weights(num_obs, num_actions, length):
    """0/1 trajectory weights of every deterministic policy on futures of ``length`` steps, shape ``(R, (OA)^length)``."""
    histories = [num_obs ** (step + 1) * num_actions**step for step in range(length)]
    check_capacity("future_policies", num_actions ** sum(histories))
    rules = []
    for choice in itertools.product(range(num_actions), repeat=sum(histories)):
        weights = np.ones(1)
        offset = 0
        for count in histories:
            onehot = np.zeros((count, num_actions))
            onehot[np.arange(count), choice[offset : offset + count]] = 1.0
            offset += count
            weights = (np.repeat(weights, num_obs)[:, None] * onehot).ravel()
        rules.append(weights)
    return np.array(rules)


def _error_rows(brep_k, brep_star, step):
    """Rows ``B^k_{H:h+1}(tau_{h+1:H}) (B^k_h - B^*_h)(o_h, a_h)`` for every future ``tau_{h:H}``."""
    core = brep_k.core
    own = brep_k.future_matrix(step, np.eye(core.size(step)))
    blocks = [
        brep_k.future_matrix(step + 1, brep_star.operator(step, obs, action))
        for obs in range(core.num_obs)
        for action in range(core.num_actions)
    ]
    return own - np.concatenate(blocks, axis=0)


def eluder_instance_from_run(log, model_class, step, breps):
    """Eluder instance of the step-``h`` B-errors along an OMLE run.

    Points are the truth's unnormalized predictive states ``B^*_{h-1:1}(tau_{h-1}) q0``; round ``k``
    uses ``y_{k,j} = 1/2 (B^k_{H:h+1}(B^k_h - B^*_h))(tau^j_{h:H})`` reweighted by every deterministic
    future policy, and ``q_k`` is the law of ``tau_{h-1}`` under the truth and the round's greedy policy.

    Args:
        log (RunLog): A completed OMLE run.
        model_class (ModelClass): The class it ran on.
        step (int): ``h`` in ``1..H``.
        breps (list[BRep]): One representation per class member over a shared core test set.
    """
    if not 1 <= step <= model_class.horizon:
        raise ModelValidationError(f"step {step} outside 1..{model_class.horizon}")
    if len(breps) != len(model_class):
        raise DimensionMismatchError("one representation per class member is needed")
    truth_index = model_class.truth_index
    star = breps[truth_index]
    points = star.forward_all(step - 1)
    obs, actions = model_class.num_obs, model_class.num_actions
    history_law = model_class.truth.do_probabilities(step - 1)
    rows_by_model = {}
    ys, qs = [], []
    for record in log.records:
        theta = record["chosen_model"]
        if theta not in rows_by_model:
            rows_by_model[theta] = 0.5 * _error_rows(breps[theta], star, step)
            policy = model_class.optimal[theta][0]
            law = history_law * policy.factor_table(obs, step - 1)
            rows_by_model[(theta, "q")] = law / law.sum()
        ys.append(rows_by_model[theta])
        qs.append(rows_by_model[(theta, "q")])
    weights = deterministic_future_weights(obs, actions, model_class.horizon - step + 1)
    return EluderInstance(points, np.array(ys), np.array(qs), weights)
