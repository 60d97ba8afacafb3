"""Core test sets, predictive states and B-representations of tabular models.

Tests are alternating tuples ``(o_h, a_h, ..., o_{h+W-1})``; the terminal test set
``U_{H+1}`` holds the single empty test ``DUMMY_TEST``.
"""

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import linalg, optimize

from psrlab.exceptions import (
    CapacityError,
    ConfigError,
    ConstraintViolationError,
    DecoderError,
    DimensionMismatchError,
    ModelValidationError,
    RankDeficiencyError,
)
from psrlab.models import PomdpModel, mdp_optimal_value
from psrlab.settings import get_app_settings
from psrlab.utils import (
    check_capacity,
    iter_histories,
    norm_1to1,
    num_trajectories,
    numerical_rank,
)

DUMMY_TEST = ()

PROVENANCES = ("revealing", "future-sufficient", "decodable", "regular-psr", "raw")


@dataclass(frozen=True, eq=False)
class CoreTestSet:
    """Core tests ``U_h`` for ``h`` in ``1..H+1``."""

    horizon: int
    num_obs: int
    num_actions: int
    tests: dict
    window: int = 0

    def __post_init__(self):
        """Normalize test tuples and check that every test fits the horizon."""
        tests = {
            int(step): tuple(tuple(int(x) for x in test) for test in entries) for step, entries in self.tests.items()
        }
        object.__setattr__(self, "tests", tests)
        if sorted(tests) != list(range(1, self.horizon + 2)):
            raise ModelValidationError("core tests must be given for every step 1..H+1")
        if tests[self.horizon + 1] != (DUMMY_TEST,):
            raise ModelValidationError("the terminal core test set must be the single dummy test")
        for step in range(1, self.horizon + 1):
            if not tests[step]:
                raise ModelValidationError(f"empty core test set at step {step}")
            if len(set(tests[step])) != len(tests[step]):
                raise ModelValidationError(f"duplicate core tests at step {step}")
            for test in tests[step]:
                if len(test) % 2 != 1:
                    raise ModelValidationError(f"test {test} must end with an observation")
                if step + len(test) // 2 > self.horizon:
                    raise ModelValidationError(f"test {test} at step {step} runs past the horizon")
                if any(not 0 <= x < (self.num_obs if i % 2 == 0 else self.num_actions) for i, x in enumerate(test)):
                    raise ModelValidationError(f"test {test} has symbols out of range")

    def tests_at(self, step):
        """``U_h`` as a tuple of tests."""
        return self.tests[step]

    def size(self, step):
        """``|U_h|``."""
        return len(self.tests[step])

    @cached_property
    def _indices(self):
        return {step: {test: i for i, test in enumerate(entries)} for step, entries in self.tests.items()}

    def index(self, step):
        """Map from test to its position in ``U_h``."""
        return self._indices[step]

    @cached_property
    def _action_seqs(self):
        return {step: tuple(sorted({test[1::2] for test in entries})) for step, entries in self.tests.items()}

    def action_seqs(self, step):
        """``U_{A,h}``: the deduplicated action sequences of ``U_h``."""
        return self._action_seqs[step]

    @cached_property
    def _prefix_free(self):
        result = {}
        for step, entries in self.tests.items():
            result[step] = tuple(
                test
                for test in entries
                if not any(len(other) > len(test) and other[: len(test)] == test for other in entries)
            )
        return result

    def prefix_free(self, step):
        """``Ū_h``: tests of ``U_h`` with no strict extension in ``U_h``."""
        return self._prefix_free[step]

    @property
    def max_action_seqs(self):
        """``U_A = max_h |U_{A,h}|``."""
        return max(len(self.action_seqs(step)) for step in range(1, self.horizon + 1))


def default_core_tests(model, m):
    """Windowed core tests ``(O x A)^{min(m-1, H-h)} x O`` plus the dummy terminal test."""
    if not 1 <= m <= model.horizon:
        raise ModelValidationError(f"window m={m} outside 1..{model.horizon}")
    tests = {}
    for step in range(1, model.horizon + 1):
        width = min(m - 1, model.horizon - step)
        check_capacity("default_core_tests", num_trajectories(model.num_obs, model.num_actions, width) * model.num_obs)
        tests[step] = tuple(iter_histories(model.num_obs, model.num_actions, width + 1))
    tests[model.horizon + 1] = (DUMMY_TEST,)
    return CoreTestSet(model.horizon, model.num_obs, model.num_actions, tests, window=m)


@dataclass(frozen=True)
class PredictiveState:
    """``q(tau_{h-1})`` over ``U_h``."""

    step: int
    vector: np.ndarray


def emission_action_matrix(model, core, step):
    """``[P(t | s_h = s)]`` for ``t`` in ``U_h``, shape ``(|U_h|, S)``.

    For windowed core tests of width ``m`` this is the m-step emission-action matrix.
    """
    if step == model.horizon + 1:
        return np.ones((1, model.num_states))
    rows = []
    for test in core.tests_at(step):
        alpha = np.eye(model.num_states)
        steps = len(test) // 2
        for offset in range(steps):
            obs, action = test[2 * offset], test[2 * offset + 1]
            emitted = model.emissions[step + offset - 1][obs][:, None] * alpha
            alpha = model.transitions[step + offset - 1, action] @ emitted
        rows.append(model.emissions[step + steps - 1][test[-1]] @ alpha)
    return np.array(rows)


def predictive_state(model, core, tau):
    """Predictive state after the history ``tau = (o_1, a_1, ..., o_{h-1}, a_{h-1})``.

    Unreachable histories give the zero vector.
    """
    if len(tau) % 2:
        raise ModelValidationError("history must end with an action")
    step = len(tau) // 2 + 1
    belief = model.initial.copy()
    for offset in range(step - 1):
        obs, action = tau[2 * offset], tau[2 * offset + 1]
        belief = belief * model.emissions[offset][obs]
        if offset + 1 < model.horizon:
            belief = model.transitions[offset, action] @ belief
    mass = belief.sum()
    if mass <= 0.0:
        return PredictiveState(step, np.zeros(core.size(step)))
    return PredictiveState(step, emission_action_matrix(model, core, step) @ (belief / mass))


def predictive_states(model, core, step):
    """Rows ``q(tau_{h-1})`` for every ``tau_{h-1}`` in index order, shape ``(N_{h-1}, |U_h|)``."""
    if step == model.horizon + 1:
        reachable = model.do_probabilities(model.horizon) > 0.0
        return reachable.astype(float)[:, None]
    joint = model.joint_belief(step - 1)
    mass = joint.sum(axis=1)
    safe = np.where(mass > 0.0, mass, 1.0)
    beliefs = np.where(mass[:, None] > 0.0, joint / safe[:, None], 0.0)
    return beliefs @ emission_action_matrix(model, core, step).T


def psr_rank(model, core):
    """Largest numerical rank of the predictive-state matrices ``D_h``, ``h = 0..H``."""
    check_capacity("psr_rank", num_trajectories(model.num_obs, model.num_actions, model.horizon))
    return max(numerical_rank(predictive_states(model, core, step)) for step in range(1, model.horizon + 2))


# --- B-representations ---


@dataclass(frozen=True, eq=False)
class BRep:
    """Operators ``ops[h][o, a]`` of shape ``(|U_{h+1}|, |U_h|)`` and initial predictive state ``q0``."""

    core: CoreTestSet
    q0: np.ndarray
    ops: dict
    provenance: str = "raw"
    meta: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        """Check operator shapes against the core test sets."""
        core = self.core
        if self.provenance not in PROVENANCES:
            raise ModelValidationError(f"unknown provenance {self.provenance!r}")
        q0 = np.array(self.q0, dtype=float)
        if q0.shape != (core.size(1),):
            raise DimensionMismatchError(f"q0 has shape {q0.shape}, expected ({core.size(1)},)")
        object.__setattr__(self, "q0", q0)
        ops = {}
        for step in range(1, core.horizon + 1):
            op = np.array(self.ops[step], dtype=float)
            expected = (core.num_obs, core.num_actions, core.size(step + 1), core.size(step))
            if op.shape != expected:
                raise DimensionMismatchError(f"operators at step {step} have shape {op.shape}, expected {expected}")
            op.setflags(write=False)
            ops[step] = op
        object.__setattr__(self, "ops", ops)

    @property
    def horizon(self):
        """Horizon of the representation."""
        return self.core.horizon

    def operator(self, step, obs, action):
        """``B_h(o, a)``."""
        return self.ops[step][obs, action]

    def forward(self, trajectory):
        """``B_{h:1}(tau_h) q0`` for one trajectory."""
        vector = self.q0
        for offset in range(len(trajectory) // 2):
            vector = self.ops[offset + 1][trajectory[2 * offset], trajectory[2 * offset + 1]] @ vector
        return vector

    def forward_all(self, step):
        """``B_{h:1}(tau_h) q0`` for every ``tau_h``, shape ``(N_h, |U_{h+1}|)``."""
        key = ("forward", step)
        if key not in self._cache:
            if step == 0:
                self._cache[key] = self.q0[None, :]
            else:
                check_capacity("brep_forward", num_trajectories(self.core.num_obs, self.core.num_actions, step))
                prev = self.forward_all(step - 1)
                nxt = np.einsum("oaij,nj->noai", self.ops[step], prev)
                self._cache[key] = nxt.reshape(-1, self.core.size(step + 1))
        return self._cache[key]

    def do_probabilities(self):
        """``B_{H:1}(tau_H) q0`` for every full trajectory."""
        return self.forward_all(self.horizon)[:, 0]

    def future_matrix(self, step, vectors):
        """``[B_{H:h}(tau_{h:H}) x]`` for every future and each column ``x`` of ``vectors``.

        Args:
            step (int): ``h`` in ``1..H+1``.
            vectors (np.ndarray): Shape ``(|U_h|,)`` or ``(|U_h|, k)``.

        Returns:
            np.ndarray: Shape ``(N_future,)`` or ``(N_future, k)`` with ``N_future = (OA)^{H-h+1}``.
        """
        vectors = np.asarray(vectors, dtype=float)
        single = vectors.ndim == 1
        current = (vectors[:, None] if single else vectors)[None, :, :]
        check_capacity(
            "brep_future",
            num_trajectories(self.core.num_obs, self.core.num_actions, self.horizon - step + 1) * current.shape[2],
        )
        for k in range(step, self.horizon + 1):
            current = np.einsum("oaij,njm->noaim", self.ops[k], current)
            current = current.reshape(-1, self.core.size(k + 1), current.shape[-1])
        result = current[:, 0, :]
        return result[:, 0] if single else result


def _shift_operators(core, step):
    """Indicator operators ``B_h(o,a)[t', t] = 1(t = (o, a) + t')`` for full-future core tests."""
    ops = np.zeros((core.num_obs, core.num_actions, core.size(step + 1), core.size(step)))
    index = core.index(step)
    for obs in range(core.num_obs):
        for action in range(core.num_actions):
            for row, nxt in enumerate(core.tests_at(step + 1)):
                test = (obs,) if nxt == DUMMY_TEST else (obs, action) + nxt
                column = index.get(test)
                if column is not None:
                    ops[obs, action, row, column] = 1.0
    return ops


def _stacked_transitions(model, step):
    """``T_{h-1}`` as an ``S x (A*S)`` matrix; ``mu1`` as a column for ``h = 1``."""
    if step == 1:
        return model.initial[:, None]
    return np.hstack(list(model.transitions[step - 2]))


def _l1_left_inverse(matrix):
    """Left inverse minimizing the ℓ1→ℓ1 norm, by linear programming."""
    rows, cols = matrix.shape
    size = cols * rows
    # variables: X (cols x rows, row-major), U (same), t
    n_vars = 2 * size + 1
    cost = np.zeros(n_vars)
    cost[-1] = 1.0
    eye = np.eye(size)
    abs_upper = np.hstack([eye, -eye, np.zeros((size, 1))])
    abs_lower = np.hstack([-eye, -eye, np.zeros((size, 1))])
    column_sums = np.zeros((rows, n_vars))
    for j in range(rows):
        column_sums[j, size + j : 2 * size : rows] = 1.0
        column_sums[j, -1] = -1.0
    a_ub = np.vstack([abs_upper, abs_lower, column_sums])
    b_ub = np.zeros(a_ub.shape[0])
    a_eq = np.zeros((cols * cols, n_vars))
    b_eq = np.eye(cols).ravel()
    for i in range(cols):
        for k in range(cols):
            a_eq[i * cols + k, i * rows : (i + 1) * rows] = matrix[:, k]
    bounds = [(None, None)] * size + [(0, None)] * (size + 1)
    result = optimize.linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if result.status != 0:
        raise RankDeficiencyError("no left inverse found by linear programming", 0.0)
    return result.x[:size].reshape(cols, rows)


def _full_rank_matrix(model, core, step):
    matrix = emission_action_matrix(model, core, step)
    sigma = np.linalg.svd(matrix, compute_uv=False)
    sigma_min = float(sigma[-1]) if matrix.shape[0] >= matrix.shape[1] else 0.0
    if numerical_rank(matrix) < model.num_states:
        raise RankDeficiencyError(f"emission-action matrix at step {step} is not of full column rank", sigma_min)
    return matrix, sigma_min


def _operators_from_inverses(model, core, inverses, window):
    """``B_h(o,a) = M_{h+1} T_{h,a} diag(O_h(o)) M_h^+`` for ``h <= H - m``, shift operators after."""
    ops = {}
    horizon = model.horizon
    for step in range(1, horizon + 1):
        if step <= horizon - window:
            nxt = emission_action_matrix(model, core, step + 1)
            block = np.zeros((model.num_obs, model.num_actions, core.size(step + 1), core.size(step)))
            for obs in range(model.num_obs):
                for action in range(model.num_actions):
                    middle = model.transitions[step - 1, action] * model.emissions[step - 1][obs][None, :]
                    block[obs, action] = nxt @ middle @ inverses[step]
            ops[step] = block
        else:
            ops[step] = _shift_operators(core, step)
    return ops


def brep_revealing(model, m, inverse_mode="pseudo"):
    """B-representation of an m-step revealing POMDP.

    Args:
        model (PomdpModel): The POMDP.
        m (int): Window length.
        inverse_mode (str): ``"pseudo"`` for the Moore-Penrose inverse, ``"l1-left"`` for the left inverse
            with the smallest ℓ1→ℓ1 norm.

    Raises:
        RankDeficiencyError: If some ``M_h`` with ``h <= H - m + 1`` lacks full column rank.
    """
    if inverse_mode not in ("pseudo", "l1-left"):
        raise ConfigError(f"unknown inverse mode {inverse_mode!r}")
    core = default_core_tests(model, m)
    inverses = {}
    sigma_mins = []
    for step in range(1, model.horizon - m + 2):
        matrix, sigma_min = _full_rank_matrix(model, core, step)
        sigma_mins.append(sigma_min)
        inverses[step] = np.linalg.pinv(matrix) if inverse_mode == "pseudo" else _l1_left_inverse(matrix)
    ops = _operators_from_inverses(model, core, inverses, m)
    q0 = emission_action_matrix(model, core, 1) @ model.initial
    used = [inverses[step] for step in range(1, model.horizon - m + 1)]
    meta = {
        "window": m,
        "num_states": model.num_states,
        "inverse_mode": inverse_mode,
        "alpha_rev": min(sigma_mins),
        "alpha_rev_l1": 1.0 / max(norm_1to1(inv) for inv in inverses.values()),
        "left_inverse_norm": max((norm_1to1(inv) for inv in used), default=0.0),
    }
    return BRep(core, q0, ops, "revealing", meta)


def transition_factorization(model, max_step=None):
    """``Psi_{h-1}``: an orthonormal basis of the span of every ``T_{h-1, a}`` column (``mu1`` for ``h = 1``)."""
    max_step = model.horizon if max_step is None else max_step
    factors = {}
    for step in range(1, max_step + 1):
        stacked = _stacked_transitions(model, step)
        left, _, _ = np.linalg.svd(stacked, full_matrices=False)
        factors[step] = left[:, : max(1, numerical_rank(stacked))]
    return factors


def brep_future_sufficient(model, m, m_natural=None, factorization=None):
    """B-representation built from generalized left inverses ``M_h^♮`` with ``M_h^♮ M_h T_{h-1} = T_{h-1}``.

    Args:
        model (PomdpModel): The POMDP.
        m (int): Window length.
        m_natural (dict | None): Explicit ``{h: M_h^♮}`` for ``h <= H - m``.
        factorization (dict | str | None): ``{h: Psi_{h-1}}`` or ``"svd"``; used as ``Psi (M Psi)^†`` when
            ``m_natural`` is not given. Without either, the pseudo-inverse is used.

    Raises:
        ConstraintViolationError: If some ``M_h^♮`` fails its defining identity beyond 1e-9.
    """
    core = default_core_tests(model, m)
    last = model.horizon - m
    if factorization == "svd":
        factorization = transition_factorization(model, max(last, 1))
    inverses = {}
    for step in range(1, last + 1):
        matrix = emission_action_matrix(model, core, step)
        if m_natural is not None:
            natural = np.asarray(m_natural[step], dtype=float)
            if natural.shape != (model.num_states, core.size(step)):
                raise DimensionMismatchError(f"M^♮ at step {step} has shape {natural.shape}")
        elif factorization is not None:
            psi = np.asarray(factorization[step], dtype=float)
            natural = psi @ np.linalg.pinv(matrix @ psi)
        else:
            natural = np.linalg.pinv(matrix)
        stacked = _stacked_transitions(model, step)
        residual = float(np.abs(natural @ matrix @ stacked - stacked).max())
        if residual > 1e-9:
            raise ConstraintViolationError(f"M^♮ at step {step} does not invert M on the transition range", residual)
        inverses[step] = natural
    ops = _operators_from_inverses(model, core, inverses, m)
    q0 = emission_action_matrix(model, core, 1) @ model.initial
    nu = max([1.0] + [norm_1to1(inv) for inv in inverses.values()])
    meta = {"window": m, "num_states": model.num_states, "nu": nu}
    return BRep(core, q0, ops, "future-sufficient", meta)


# --- Decodable POMDPs ---


@dataclass(frozen=True)
class Decoder:
    """``phi[h]`` maps the observable suffix ``z_h`` (last ``min(m, h)`` observations) to ``s_h``."""

    window: int
    phi: dict

    def suffix(self, history):
        """The suffix of an observable history that the decoder reads."""
        keep = 2 * min(self.window, (len(history) + 1) // 2) - 1
        return tuple(history[-keep:])

    def decode(self, step, suffix):
        """Decoded latent state, or ``None`` when the suffix is never produced."""
        return self.phi.get(step, {}).get(tuple(suffix))


def _positive_state_pairs(model, step):
    """Yield ``(observable history, state)`` pairs with positive probability at ``step``."""
    joint = model.emission_joint(step)
    histories = list(iter_histories(model.num_obs, model.num_actions, step))
    flat = joint.reshape(-1, model.num_states)
    rows, states = np.nonzero(flat > 0.0)
    for row, state in zip(rows.tolist(), states.tolist()):
        yield histories[row], state


def infer_decoder(model, m):
    """Build the m-step decoder of ``model`` by joint enumeration.

    Raises:
        DecoderError: If two latent states share a suffix with positive probability.
    """
    phi = {}
    decoder = Decoder(m, phi)
    for step in range(1, model.horizon + 1):
        table = phi.setdefault(step, {})
        for history, state in _positive_state_pairs(model, step):
            key = decoder.suffix(history)
            if table.setdefault(key, state) != state:
                raise DecoderError(f"suffix {key} at step {step} is produced by states {table[key]} and {state}")
    return decoder


def verify_decoder(model, decoder):
    """Check ``decoder`` on every positive-probability (history, latent state) pair.

    Raises:
        DecoderError: On the first pair that decodes wrongly.
    """
    for step in range(1, model.horizon + 1):
        for history, state in _positive_state_pairs(model, step):
            decoded = decoder.decode(step, decoder.suffix(history))
            if decoded != state:
                raise DecoderError(f"history {history} at step {step} decodes to {decoded}, latent state is {state}")


def brep_decodable(model, decoder, m):
    """B-representation of an m-step decodable POMDP from its decoder.

    For ``h <= H - m`` the entry at ``(t', t)`` of ``B_h(o, a)`` is nonzero only when ``t`` is
    the m-observation prefix of ``(o, a) + t'``, and then equals the probability of the last
    observation of ``t'`` given the decoded state at step ``h + m - 1``.
    """
    verify_decoder(model, decoder)
    core = default_core_tests(model, m)
    horizon = model.horizon
    ops = {}
    for step in range(1, horizon + 1):
        if step > horizon - m:
            ops[step] = _shift_operators(core, step)
            continue
        block = np.zeros((model.num_obs, model.num_actions, core.size(step + 1), core.size(step)))
        index = core.index(step)
        last = step + m - 1
        for obs in range(model.num_obs):
            for action in range(model.num_actions):
                for row, nxt in enumerate(core.tests_at(step + 1)):
                    full = (obs, action) + nxt
                    test = full[: 2 * m - 1]
                    state = decoder.decode(last, test)
                    if state is None:
                        continue
                    landing = model.transitions[last - 1, full[2 * m - 1]][:, state]
                    block[obs, action, row, index[test]] = float(model.emissions[last][full[2 * m]] @ landing)
        ops[step] = block
    q0 = emission_action_matrix(model, core, 1) @ model.initial
    return BRep(core, q0, ops, "decodable", {"window": m})


# --- Regular PSRs ---


def _raw_predictive_states(brep, step):
    """Predictive states of a raw representation, normalized with uniform-policy future sums."""
    joint = brep.forward_all(step - 1)
    futures = brep.future_matrix(step, joint.T)
    remaining = brep.horizon - step + 1
    mass = futures.sum(axis=0) / float(brep.core.num_actions) ** remaining
    safe = np.where(mass > 1e-300, mass, 1.0)
    return np.where(mass[:, None] > 1e-300, joint / safe[:, None], 0.0), mass


def _model_predictive_states(model, core, step):
    mass = model.do_probabilities(step - 1)
    return predictive_states(model, core, step), mass


def _select_core_columns(columns, rank, mode):
    """Pick ``rank`` columns spanning ``columns``; returns (indices, pinv norm, exhaustive flag)."""
    if rank == 0:
        return [], 0.0, True
    subset_cap = get_app_settings()["subset_cap"]
    count = math.comb(columns.shape[1], rank)
    if mode == "auto":
        mode = "exhaustive" if count <= subset_cap else "greedy"
    if mode == "exhaustive":
        if count > subset_cap:
            raise CapacityError("brep_regular_psr", count, subset_cap)
        best, best_norm = None, np.inf
        for subset in itertools.combinations(range(columns.shape[1]), rank):
            block = columns[:, subset]
            if numerical_rank(block) < rank:
                continue
            norm = norm_1to1(np.linalg.pinv(block))
            if norm < best_norm - 1e-12:
                best, best_norm = list(subset), norm
        return best, best_norm, True
    if mode != "greedy":
        raise ConfigError(f"unknown core matrix choice {mode!r}")
    _, _, pivots = linalg.qr(columns, pivoting=True, mode="economic")
    chosen = sorted(pivots[:rank].tolist())
    return chosen, norm_1to1(np.linalg.pinv(columns[:, chosen])), False


def brep_regular_psr(raw, core_matrix_choice="auto", m=1):
    """B-representation built from core sub-matrices of the predictive-state matrices.

    Args:
        raw (PomdpModel | BRep): Source of predictive states.
        core_matrix_choice (str): ``"exhaustive"``, ``"greedy"`` or ``"auto"`` (exhaustive when the
            subset count is within ``subset_cap``).
        m (int): Window of the default core tests when ``raw`` is a model.

    Returns:
        tuple[BRep, float]: The representation and ``alpha_psr``.
    """
    if isinstance(raw, PomdpModel):
        core = default_core_tests(raw, m)
        horizon = raw.horizon

        def states(step):
            return _model_predictive_states(raw, core, step)

    else:
        core = raw.core
        horizon = raw.horizon

        def states(step):
            return _raw_predictive_states(raw, step)

    obs, actions = core.num_obs, core.num_actions
    ops = {}
    inverse_norms = []
    exhaustive = True
    current, current_mass = states(1)
    q0 = current[0]
    for step in range(1, horizon + 1):
        nxt, nxt_mass = states(step + 1)
        reachable = np.nonzero(current_mass > 0.0)[0]
        columns = current[reachable].T
        _, unique = np.unique(np.round(columns.T, 12), axis=0, return_index=True)
        unique = np.sort(unique)
        rank = numerical_rank(columns)
        chosen, inverse_norm, was_exhaustive = _select_core_columns(columns[:, unique], rank, core_matrix_choice)
        exhaustive = exhaustive and was_exhaustive
        inverse_norms.append(inverse_norm)
        histories = reachable[unique][chosen]
        block = np.zeros((obs, actions, core.size(step + 1), core.size(step)))
        if chosen:
            pinv = np.linalg.pinv(current[histories].T)
            for o in range(obs):
                for a in range(actions):
                    children = (histories * obs + o) * actions + a
                    weight = nxt_mass[children] / current_mass[histories]
                    block[o, a] = (nxt[children] * weight[:, None]).T @ pinv
        ops[step] = block
        current, current_mass = nxt, nxt_mass
    inverse = max(inverse_norms) if inverse_norms else 0.0
    alpha = 1.0 / inverse if inverse > 0.0 else np.inf
    meta = {"alpha_psr_inv": inverse, "exhaustive": exhaustive, "window": core.window}
    return BRep(core, q0, ops, "regular-psr", meta), alpha


# --- Latent MDPs ---


@dataclass(frozen=True, eq=False)
class LatentMdp:
    """One component MDP: ``transitions[h, a, s', s]``, reward probabilities ``reward_probs[h, s, a]``."""

    initial: np.ndarray
    transitions: np.ndarray
    reward_probs: np.ndarray

    @property
    def num_states(self):
        """State count."""
        return len(self.initial)

    @property
    def num_actions(self):
        """Action count."""
        return self.reward_probs.shape[2]

    @property
    def horizon(self):
        """Horizon."""
        return self.reward_probs.shape[0]


def _latent_index(component, state, reward, num_states):
    return (component * num_states + state) * 2 + reward


def latent_mdp_to_pomdp(mdps, mixing, name="latent-mdp"):
    """Cast a latent MDP into a POMDP.

    Latent states are ``(m, s, r_prev)`` and observations ``(s, r_prev)``. The POMDP reward at step
    ``h >= 2`` is ``r_prev / (H - 1)``, so the last step's MDP reward is never paid.
    """
    mixing = np.asarray(mixing, dtype=float)
    if len(mdps) != len(mixing) or not mdps:
        raise DimensionMismatchError("mixing weights must match the component count")
    states, actions, horizon = mdps[0].num_states, mdps[0].num_actions, mdps[0].horizon
    if any((mdp.num_states, mdp.num_actions, mdp.horizon) != (states, actions, horizon) for mdp in mdps):
        raise DimensionMismatchError("component MDPs must share S, A and H")
    if horizon < 2:
        raise ModelValidationError("latent MDP casting needs H >= 2")
    count = len(mdps)
    latent = 2 * states * count
    initial = np.zeros(latent)
    transitions = np.zeros((horizon - 1, actions, latent, latent))
    emissions = np.zeros((horizon, 2 * states, latent))
    for m, mdp in enumerate(mdps):
        for s in range(states):
            initial[_latent_index(m, s, 0, states)] = mixing[m] * mdp.initial[s]
            for r in range(2):
                column = _latent_index(m, s, r, states)
                emissions[:, s * 2 + r, column] = 1.0
                for step in range(horizon - 1):
                    for a in range(actions):
                        success = mdp.reward_probs[step, s, a]
                        for nxt in range(states):
                            p = mdp.transitions[step, a, nxt, s]
                            transitions[step, a, _latent_index(m, nxt, 1, states), column] += success * p
                            transitions[step, a, _latent_index(m, nxt, 0, states), column] += (1.0 - success) * p
    rewards = np.zeros((horizon, 2 * states, actions))
    for s in range(states):
        rewards[1:, s * 2 + 1, :] = 1.0 / (horizon - 1)
    return PomdpModel(horizon, latent, 2 * states, actions, transitions, emissions, initial, rewards, name=name)


def latent_mdp_value(mdps, mixing):
    """Optimal value of a single-component latent MDP under the casting's reward scaling."""
    if len(mdps) != 1:
        raise ModelValidationError("exact MDP planning needs a single component")
    mdp = mdps[0]
    scaled = np.array(mdp.reward_probs, dtype=float) / (mdp.horizon - 1)
    scaled[-1] = 0.0
    return float(np.asarray(mixing)[0]) * mdp_optimal_value(mdp.initial, mdp.transitions, scaled)


def test_sufficiency_matrix(mdps, step, state, window):
    """``L_h(s) = [P_m(r_h, s_{h+1}, ..., r_{h+l-1}, s_{h+l} | s_h = s, do(a))]`` over tests and components."""
    states, actions = mdps[0].num_states, mdps[0].num_actions
    columns = []
    for mdp in mdps:
        column = []
        for test in itertools.product(*([range(actions), range(2), range(states)] * window)):
            prob, current = 1.0, state
            for offset in range(window):
                action, reward, nxt = test[3 * offset : 3 * offset + 3]
                success = mdp.reward_probs[step - 1 + offset, current, action]
                moved = mdp.transitions[step - 1 + offset, action, nxt, current]
                prob *= (success if reward else 1.0 - success) * moved
                current = nxt
            column.append(prob)
        columns.append(column)
    return np.array(columns).T


# --- Validation ---


def brep_residuals(brep, model):
    """Residuals of the joint, one-step and future identities of a B-representation against ``model``.

    Returns:
        dict: ``{"joint": ..., "one_step": ..., "future": ...}``, each a max absolute deviation.
    """
    core = brep.core
    if (model.horizon, model.num_obs, model.num_actions) != (core.horizon, core.num_obs, core.num_actions):
        raise DimensionMismatchError("representation and model disagree on dimensions")
    joint = 0.0
    for step in range(model.horizon + 1):
        if step < model.horizon:
            truth = model.joint_belief(step) @ emission_action_matrix(model, core, step + 1).T
        else:
            truth = model.do_probabilities(step)[:, None]
        joint = max(joint, float(np.abs(brep.forward_all(step) - truth).max()))
    one_step = 0.0
    future = 0.0
    full = model.do_probabilities(model.horizon)
    for step in range(1, model.horizon + 1):
        states = predictive_states(model, core, step)
        mass = model.do_probabilities(step - 1)
        reachable = mass > 0.0
        children = predictive_states(model, core, step + 1)
        child_mass = model.do_probabilities(step)
        branching = model.num_obs * model.num_actions
        parent_mass = np.repeat(np.where(reachable, mass, 1.0), branching)
        ratio = np.where(np.repeat(reachable, branching), child_mass / parent_mass, 0.0)
        rhs = (children * ratio[:, None]).reshape(len(mass), model.num_obs, model.num_actions, -1)
        lhs = np.einsum("oaij,nj->noai", brep.ops[step], states)
        if reachable.any():
            one_step = max(one_step, float(np.abs(lhs - rhs)[reachable].max()))
            predicted = brep.future_matrix(step, states[reachable].T)
            truth = (full.reshape(len(mass), -1)[reachable] / mass[reachable][:, None]).T
            future = max(future, float(np.abs(predicted - truth).max()))
    return {"joint": joint, "one_step": one_step, "future": future}


def validate_brep(brep, model):
    """Largest residual among the identities checked by :func:`brep_residuals`."""
    return max(brep_residuals(brep, model).values())


# --- Files ---


def brep_to_dict(brep):
    """Serialize a representation with its test labels."""
    core = brep.core
    return {
        "provenance": brep.provenance,
        "horizon": core.horizon,
        "num_observations": core.num_obs,
        "num_actions": core.num_actions,
        "window": core.window,
        "tests": {str(step): [list(test) for test in core.tests_at(step)] for step in range(1, core.horizon + 2)},
        "q0": brep.q0.tolist(),
        "operators": {str(step): brep.ops[step].tolist() for step in range(1, core.horizon + 1)},
        "meta": {key: value for key, value in brep.meta.items() if isinstance(value, (int, float, str, bool))},
    }


def brep_from_dict(data):
    """Inverse of :func:`brep_to_dict`."""
    core = CoreTestSet(
        data["horizon"],
        data["num_observations"],
        data["num_actions"],
        {int(step): [tuple(test) for test in tests] for step, tests in data["tests"].items()},
        window=data.get("window", 0),
    )
    ops = {int(step): np.array(op) for step, op in data["operators"].items()}
    return BRep(core, np.array(data["q0"]), ops, data["provenance"], dict(data.get("meta", {})))


def save_brep(brep, path):
    """Write a representation as JSON."""
    Path(path).write_text(json.dumps(brep_to_dict(brep), indent=2) + "\n", encoding="utf-8")


def load_brep(path):
    """Read a representation written by :func:`save_brep`."""
    return brep_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
