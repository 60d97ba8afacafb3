"""Minimizing a convex max of pieces over a product of two simplices."""

import abc
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from psrlab.exceptions import ConfigError, DimensionMismatchError
from psrlab.metrics import psrlab_saddle_iterations, psrlab_saddle_nonconverged_total
from psrlab.run_logging import emit_saddle_warning
from psrlab.settings import get_app_settings

CHECK_EVERY = 25


@dataclass
class SaddleSolution:
    """Minimizer found by :func:`solve_saddle` with its certified lower bound."""

    p_exp: np.ndarray
    p_out: np.ndarray
    value: float
    lower_bound: float
    gap: float
    iterations: int
    converged: bool


class SaddleObjective(abc.ABC):
    """``F(p_exp, p_out) = max_k phi_k(p_exp, p_out)`` with convex pieces ``phi_k``."""

    n_exp = 0
    n_out = 0

    @abc.abstractmethod
    def evaluate(self, p_exp, p_out):
        """Return ``(value, key, grad_exp, grad_out)`` for the maximizing piece.

        ``key`` identifies the linear piece the subgradient belongs to, so repeated cuts
        are stored once.
        """


class LinearSaddle(SaddleObjective):
    """``max_k p_out . gain[:, k] - p_exp . cost[:, k]``."""

    def __init__(self, gain, cost):
        """Check that both payoff tables have one column per piece."""
        self.gain = np.asarray(gain, dtype=float)
        self.cost = np.asarray(cost, dtype=float)
        if self.gain.shape[1] != self.cost.shape[1]:
            raise DimensionMismatchError("gain and cost tables disagree on the number of pieces")
        self.n_out, self.n_exp = self.gain.shape[0], self.cost.shape[0]

    def values(self, p_exp, p_out):
        """Value of every piece."""
        return p_out @ self.gain - p_exp @ self.cost

    def evaluate(self, p_exp, p_out):
        """Best-response piece, ties to the smallest index."""
        values = self.values(p_exp, p_out)
        k = int(np.argmax(values))
        return float(values[k]), k, -self.cost[:, k], self.gain[:, k]


def _cutting_plane(cuts, n_exp, n_out):
    """Minimize the max of stored cuts over the simplices; returns ``(bound, p_exp, p_out)`` or ``None``."""
    offsets = np.array([cut[0] for cut in cuts])
    slopes = np.array([np.concatenate([cut[1], cut[2]]) for cut in cuts])
    n_vars = n_exp + n_out + 1
    cost = np.zeros(n_vars)
    cost[-1] = 1.0
    a_ub = np.hstack([slopes, -np.ones((len(cuts), 1))])
    a_eq = np.zeros((2, n_vars))
    a_eq[0, :n_exp] = 1.0
    a_eq[1, n_exp : n_exp + n_out] = 1.0
    bounds = [(0.0, None)] * (n_exp + n_out) + [(None, None)]
    result = optimize.linprog(cost, A_ub=a_ub, b_ub=-offsets, A_eq=a_eq, b_eq=np.ones(2), bounds=bounds, method="highs")
    if result.status != 0:
        return None
    point = np.maximum(result.x[:-1], 0.0)
    p_exp, p_out = point[:n_exp], point[n_exp:]
    return float(result.fun), p_exp / p_exp.sum(), p_out / p_out.sum()


def _solve_exact(objective, problem):
    if not isinstance(objective, LinearSaddle):
        raise ConfigError("the linprog method needs a linear objective")
    cuts = [(0.0, -objective.cost[:, k], objective.gain[:, k]) for k in range(objective.gain.shape[1])]
    solved = _cutting_plane(cuts, objective.n_exp, objective.n_out)
    if solved is None:
        raise ConfigError(f"linear program for {problem} did not solve")
    bound, p_exp, p_out = solved
    value = float(objective.values(p_exp, p_out).max())
    return SaddleSolution(p_exp, p_out, value, bound, max(0.0, value - bound), 0, True)


def solve_saddle(objective, problem="edec", method="eg", step_scale=None, max_iterations=None, tolerance=None):
    """Minimize ``objective`` over ``Δ(n_exp) x Δ(n_out)``.

    Exponentiated gradient with step ``step_scale / range`` runs against the exact best
    response. Every subgradient yields a cut; a linear program over the cuts gives a
    lower bound on the minimum and a candidate point, and the solve stops once the best
    value found is within ``tolerance`` of that bound.

    Args:
        objective (SaddleObjective): The objective.
        problem (str): Metric and log label.
        method (str): ``"eg"`` or ``"linprog"`` (linear objectives only, exact).
        step_scale (float | None): Defaults to ``saddle_step_scale``.
        max_iterations (int | None): Defaults to ``saddle_max_iterations``.
        tolerance (float | None): Duality-gap tolerance; defaults to ``saddle_tolerance``.

    Returns:
        SaddleSolution: Best point found; ``converged`` is False when the gap stayed above tolerance.
    """
    if method == "linprog":
        return _solve_exact(objective, problem)
    if method != "eg":
        raise ConfigError(f"unknown saddle method {method!r}")
    settings = get_app_settings()
    step_scale = settings["saddle_step_scale"] if step_scale is None else step_scale
    max_iterations = settings["saddle_max_iterations"] if max_iterations is None else max_iterations
    tolerance = settings["saddle_tolerance"] if tolerance is None else tolerance

    n_exp, n_out = objective.n_exp, objective.n_out
    log_exp = np.full(n_exp, -np.log(n_exp))
    log_out = np.full(n_out, -np.log(n_out))
    cuts = {}
    best = None
    lower = -np.inf
    spread = 0.0
    iteration = 0
    converged = False

    def visit(p_exp, p_out):
        nonlocal best
        value, key, grad_exp, grad_out = objective.evaluate(p_exp, p_out)
        cuts[key] = (value - grad_exp @ p_exp - grad_out @ p_out, grad_exp, grad_out)
        if best is None or value < best[2]:
            best = (p_exp, p_out, value)
        return grad_exp, grad_out

    while iteration < max_iterations:
        iteration += 1
        p_exp, p_out = np.exp(log_exp), np.exp(log_out)
        grad_exp, grad_out = visit(p_exp, p_out)
        if iteration % CHECK_EVERY == 0 or iteration == max_iterations:
            solved = _cutting_plane(list(cuts.values()), n_exp, n_out)
            if solved is not None:
                lower = max(lower, solved[0])
                visit(solved[1], solved[2])
            if best[2] - lower <= tolerance:
                converged = True
                break
        spread = max(spread, np.ptp(grad_exp), np.ptp(grad_out))
        step = step_scale / spread if spread > 0.0 else step_scale
        log_exp = log_exp - step * grad_exp
        log_exp -= logsumexp(log_exp)
        log_out = log_out - step * grad_out
        log_out -= logsumexp(log_out)

    gap = max(0.0, best[2] - lower)
    psrlab_saddle_iterations.labels(problem=problem).observe(iteration)
    if not converged:
        psrlab_saddle_nonconverged_total.labels(problem=problem).inc()
        emit_saddle_warning(problem, iteration, gap)
    return SaddleSolution(best[0], best[1], best[2], lower, gap, iteration, converged)
