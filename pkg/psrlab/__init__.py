"""Package declaration for psrlab."""

from importlib import metadata

try:
    __version__ = metadata.version(__name__)
except metadata.PackageNotFoundError:  # running from a source checkout
    __version__ = "0.0.0"


class PsrLabConfig:  # pylint: disable=too-few-public-methods
    """Package configuration for psrlab.

    ``default_settings`` holds every tunable numerical constant. Values are read at
    call time through :func:`psrlab.settings.get_app_settings`, which layers the
    ``PSRLAB_CAP`` and ``PSRLAB_SETTINGS`` environment overrides on top.
    """

    name = "psrlab"
    verbose_name = "PSR Lab"
    version = __version__
    description = "Desk-scale laboratory for B-stable predictive state representations."
    required_settings = []
    default_settings = {
        "enumeration_cap": 1_000_000,
        "subset_cap": 100_000,
        "rank_tolerance": 1e-8,
        "stochastic_tolerance": 1e-12,
        "distribution_tolerance": 1e-10,
        "likelihood_floor": 1e-300,
        "saddle_step_scale": 0.1,
        "saddle_max_iterations": 5000,
        "saddle_tolerance": 1e-4,
        "mle_beta_constant": 2.0,
        "weak_stability_samples": 200,
        "run_logging_enabled": True,
        "log_trajectories": False,
    }


config = PsrLabConfig  # pylint:disable=invalid-name
