"""Prometheus metric definitions for psrlab runs."""

from prometheus_client import REGISTRY, Counter, Histogram, write_to_textfile

# --- Learners ---

psrlab_episodes_total = Counter(
    "psrlab_episodes_total",
    "Total number of environment episodes executed by learners",
    ["algorithm"],
)

psrlab_confidence_set_size = Histogram(
    "psrlab_confidence_set_size",
    "Size of the OMLE confidence set at each iteration",
    ["algorithm"],
    buckets=[1, 2, 4, 8, 16, 32, 64, 128, 256],
)

psrlab_saddle_iterations = Histogram(
    "psrlab_saddle_iterations",
    "Exponentiated-gradient iterations used per saddle-point solve",
    ["problem"],
    buckets=[1, 10, 50, 100, 250, 500, 1000, 2500, 5000, 10000],
)

psrlab_saddle_nonconverged_total = Counter(
    "psrlab_saddle_nonconverged_total",
    "Saddle-point solves that stopped at the iteration limit above the gap tolerance",
    ["problem"],
)

# --- Representations and certificates ---

psrlab_certification_duration_seconds = Histogram(
    "psrlab_certification_duration_seconds",
    "Duration of B-stability certification in seconds",
    ["provenance"],
    buckets=[0.001, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 60.0],
)

psrlab_capacity_rejections_total = Counter(
    "psrlab_capacity_rejections_total",
    "Exact enumerations rejected by the enumeration cap",
    ["operation"],
)

# --- Verification suites ---

psrlab_suite_checks_total = Counter(
    "psrlab_suite_checks_total",
    "Individual inequality checks run by verification suites",
    ["suite", "status"],
)


def write_metrics(path, registry=REGISTRY):
    """Write the registry in Prometheus text format to ``path``."""
    write_to_textfile(str(path), registry)
