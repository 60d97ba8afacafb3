"""Named benchmark models and model classes."""

import logging

import numpy as np

from psrlab.exceptions import ConfigError, RankDeficiencyError
from psrlab.models import ModelClass, PomdpModel
from psrlab.representations import LatentMdp, default_core_tests, latent_mdp_to_pomdp
from psrlab.utils import as_generator

logger = logging.getLogger(__name__)

STAY = np.eye(2)
FLIP = np.array([[0.0, 1.0], [1.0, 0.0]])


def _binary_model(emission, flip_action=1, initial=(1.0, 0.0), name=""):
    """H=2, S=O=A=2: ``flip_action`` swaps the state, the other action keeps it; reward ``1/H`` on ``o = 1``."""
    horizon = 2
    transitions = np.zeros((horizon - 1, 2, 2, 2))
    transitions[0, flip_action] = FLIP
    transitions[0, 1 - flip_action] = STAY
    emissions = np.repeat(np.asarray(emission, dtype=float)[None], horizon, axis=0)
    rewards = np.zeros((horizon, 2, 2))
    rewards[:, 1, :] = 1.0 / horizon
    return PomdpModel(horizon, 2, 2, 2, transitions, emissions, np.asarray(initial, dtype=float), rewards, name=name)


def fix_id():
    """Identity emissions; 1-step decodable and 1-step revealing with ``alpha_rev = 1``."""
    return _binary_model(np.eye(2), name="FIX-ID")


def fix_noisy(accuracy=0.8):
    """FIX-ID observed through the symmetric channel ``[[p, 1-p], [1-p, p]]``."""
    emission = [[accuracy, 1.0 - accuracy], [1.0 - accuracy, accuracy]]
    return _binary_model(emission, name="FIX-NOISY")


def noisy_class():
    """Eight models over the flipping action, channel accuracy (0.8 or 0.7) and initial state.

    Member 0 is FIX-NOISY and is the ground truth.
    """
    members = []
    for flip_action in (1, 0):
        for accuracy in (0.8, 0.7):
            for initial in ((1.0, 0.0), (0.0, 1.0)):
                emission = [[accuracy, 1.0 - accuracy], [1.0 - accuracy, accuracy]]
                label = f"flip{flip_action}-acc{accuracy}-s{int(initial[1])}"
                members.append(_binary_model(emission, flip_action, initial, name=label))
    return ModelClass(members, 0, default_core_tests(members[0], 1), name="FIX-NOISY-CLASS")


def fix_dec2():
    """H=3 POMDP whose state is decoded from the last two observations and the action between them.

    State 0 emits 0, states 1 and 2 emit 1. From state 0 the action picks which of 1 or 2 can be
    reached; state 2 always returns to 0, so two consecutive 1s mean state 1.
    """
    horizon, states = 3, 3
    kernel = np.zeros((2, states, states))
    kernel[0, :, 0] = [0.2, 0.8, 0.0]
    kernel[1, :, 0] = [0.3, 0.0, 0.7]
    kernel[0, :, 1] = [0.6, 0.4, 0.0]
    kernel[1, :, 1] = [0.9, 0.1, 0.0]
    kernel[:, :, 2] = [1.0, 0.0, 0.0]
    transitions = np.repeat(kernel[None], horizon - 1, axis=0)
    emission = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]])
    emissions = np.repeat(emission[None], horizon, axis=0)
    rewards = np.zeros((horizon, 2, 2))
    rewards[:, 1, :] = 1.0 / horizon
    initial = np.array([1.0, 0.0, 0.0])
    return PomdpModel(horizon, states, 2, 2, transitions, emissions, initial, rewards, name="FIX-DEC2")


def lmdp_components(horizon=3):
    """The two component MDPs and mixing weights behind FIX-LMDP."""
    steps = horizon - 1
    sticky = np.array([[0.9, 0.1], [0.1, 0.9]])
    flippy = np.array([[0.2, 0.8], [0.8, 0.2]])
    first = np.zeros((steps, 2, 2, 2))
    first[:, 0] = sticky
    first[:, 1] = sticky[::-1]
    second = np.zeros((steps, 2, 2, 2))
    second[:, 0] = flippy
    second[:, 1] = flippy[::-1]
    first_rewards = np.repeat(np.array([[0.2, 0.2], [0.8, 0.8]])[None], horizon, axis=0)
    second_rewards = np.repeat(np.array([[0.7, 0.7], [0.3, 0.3]])[None], horizon, axis=0)
    mdps = [
        LatentMdp(np.array([1.0, 0.0]), first, first_rewards),
        LatentMdp(np.array([0.5, 0.5]), second, second_rewards),
    ]
    return mdps, np.array([0.5, 0.5])


def fix_lmdp(horizon=3):
    """Two-component latent MDP cast into a POMDP over ``(component, state, last reward)``."""
    mdps, mixing = lmdp_components(horizon)
    return latent_mdp_to_pomdp(mdps, mixing, name="FIX-LMDP")


def _sigma_min(matrix):
    rows, cols = matrix.shape
    if rows < cols:
        return 0.0
    return float(np.linalg.svd(matrix, compute_uv=False)[-1])


def _random_kernels(rng, horizon, states, actions):
    return rng.dirichlet(np.ones(states), size=(horizon - 1, actions, states)).transpose(0, 1, 3, 2)


def _random_rewards(rng, horizon, obs, actions):
    return rng.uniform(0.0, 1.0 / horizon, size=(horizon, obs, actions))


def random_revealing(num_states=2, num_obs=2, num_actions=2, horizon=2, sigma_floor=0.3, rng_seed=0, max_retries=200):
    """Random POMDP whose emission matrices all have ``sigma_min >= sigma_floor``.

    Raises:
        RankDeficiencyError: If no draw reaches the floor within ``max_retries``.
    """
    rng = as_generator(rng_seed)
    best = 0.0
    for attempt in range(max_retries):
        emissions = rng.dirichlet(np.ones(num_obs), size=(horizon, num_states)).transpose(0, 2, 1)
        floor = min(_sigma_min(matrix) for matrix in emissions)
        best = max(best, floor)
        if floor >= sigma_floor:
            logger.debug("random-revealing accepted after %d draws", attempt + 1)
            return PomdpModel(
                horizon,
                num_states,
                num_obs,
                num_actions,
                _random_kernels(rng, horizon, num_states, num_actions),
                emissions,
                rng.dirichlet(np.ones(num_states)),
                _random_rewards(rng, horizon, num_obs, num_actions),
                name="random-revealing",
            )
    raise RankDeficiencyError(f"no emission draw reached sigma_min >= {sigma_floor} in {max_retries} tries", best)


def random_decodable(num_states=2, num_obs=4, num_actions=2, horizon=2, rng_seed=0):
    """Random 1-step decodable POMDP: each observation is emitted by exactly one state."""
    if num_obs < num_states:
        raise ConfigError("a decodable model needs at least as many observations as states")
    rng = as_generator(rng_seed)
    owner = np.concatenate([np.arange(num_states), rng.integers(0, num_states, size=num_obs - num_states)])
    rng.shuffle(owner)
    emissions = np.zeros((horizon, num_obs, num_states))
    for step in range(horizon):
        for state in range(num_states):
            support = np.nonzero(owner == state)[0]
            emissions[step, support, state] = rng.dirichlet(np.ones(len(support)))
    return PomdpModel(
        horizon,
        num_states,
        num_obs,
        num_actions,
        _random_kernels(rng, horizon, num_states, num_actions),
        emissions,
        rng.dirichlet(np.ones(num_states)),
        _random_rewards(rng, horizon, num_obs, num_actions),
        name="random-decodable",
    )


FIXTURES = {
    "FIX-ID": lambda params, seed: fix_id(),
    "FIX-NOISY": lambda params, seed: fix_noisy(**params),
    "FIX-NOISY-CLASS": lambda params, seed: noisy_class(),
    "FIX-DEC2": lambda params, seed: fix_dec2(),
    "FIX-LMDP": lambda params, seed: fix_lmdp(**params),
    "random-revealing": lambda params, seed: random_revealing(rng_seed=seed, **params),
    "random-decodable": lambda params, seed: random_decodable(rng_seed=seed, **params),
}


def generate_fixture(name, params=None, rng_seed=0):
    """Build a named fixture.

    Args:
        name (str): One of :data:`FIXTURES`.
        params (dict | None): Keyword parameters of the fixture builder.
        rng_seed (int): Seed for the random generators.

    Returns:
        PomdpModel | ModelClass: The fixture.
    """
    try:
        builder = FIXTURES[name]
    except KeyError as exc:
        raise ConfigError(f"unknown fixture {name!r}; expected one of {sorted(FIXTURES)}") from exc
    try:
        return builder(dict(params or {}), rng_seed)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for fixture {name}: {exc}") from exc
