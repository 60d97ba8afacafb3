"""Command-line front end: certification, learner runs, verification suites and fixture generation.

Every command except ``generate`` writes one run directory under ``--output`` named after
the command and the configuration hash. The directory is assembled in a temporary
sibling and moved into place with :func:`os.replace`, so a reader never sees a half
written run. Errors print a JSON object on stdout; the exit status is 2 for a bad
configuration or a missing file and 1 for any other failure.
"""

import argparse
import hashlib
import json
import logging
import math
import os
import platform
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from psrlab import __version__
from psrlab.exceptions import CapacityError, ConfigError, PsrLabError
from psrlab.fixtures import FIXTURES, generate_fixture
from psrlab.learners import run_learner
from psrlab.metrics import write_metrics
from psrlab.models import ModelClass, PomdpModel, load_model, load_model_class, save_model, save_model_class
from psrlab.representations import default_core_tests, save_brep, validate_brep
from psrlab.settings import CAP_ENV_VAR
from psrlab.stability import certify_stability
from psrlab.suites import CONSTRUCTIONS, SUITES, build_brep, run_suite

logger = logging.getLogger(__name__)

_CONFIG_SCHEMA_PATH = Path(__file__).with_name("experiment-config-schema.json")

COMMANDS = ("certify", "learn", "verify", "eluder-suite", "generate")
LEARNER_PARAMS = {
    "omle": ("iterations", "beta", "delta"),
    "e2d": ("episodes", "gamma", "eta", "solver_cfg"),
    "mops": ("episodes", "gamma", "eta"),
    "rfe2d": ("episodes", "gamma", "eta", "solver_cfg"),
}
# Keys that do not change what a run computes.
_UNHASHED_KEYS = ("output", "workers")
_ARG_FIELDS = (
    "model",
    "construct",
    "m",
    "inverse_mode",
    "model_class",
    "algorithm",
    "suite",
    "output",
    "cap",
    "workers",
    "fixture",
    "out",
)


@dataclass
class ExperimentConfig:  # pylint: disable=too-many-instance-attributes
    """One experiment, as read from ``run --config`` or assembled from command-line flags."""

    command: str
    model: str = None
    construct: str = "revealing"
    m: int = 1
    inverse_mode: str = "pseudo"
    model_class: str = None
    algorithm: str = None
    params: dict = field(default_factory=dict)
    suite: str = None
    seeds: list = field(default_factory=lambda: [0])
    output: str = "results"
    cap: int = None
    workers: int = 1
    fixture: str = None
    fixture_params: dict = field(default_factory=dict)
    out: str = None

    @classmethod
    def from_dict(cls, data):
        """Validate ``data`` against the experiment schema and build a config.

        Raises:
            ConfigError: If ``data`` does not match the schema or misses a field its command needs.
        """
        schema = json.loads(_CONFIG_SCHEMA_PATH.read_text(encoding="utf-8"))
        try:
            jsonschema.validate(data, schema)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"invalid experiment config: {exc.message}") from exc
        data = dict(data)
        if "class" in data:
            data["model_class"] = data.pop("class")
        config = cls(**data)
        config.validate()
        return config

    def validate(self):
        """Check the fields each command requires."""
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {COMMANDS}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        required = {
            "certify": ("model",),
            "learn": ("model_class", "algorithm"),
            "verify": ("suite",),
            "generate": ("fixture", "out"),
        }.get(self.command, ())
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ConfigError(f"{self.command} needs {', '.join(missing)}")
        if self.construct not in CONSTRUCTIONS:
            raise ConfigError(f"unknown construction {self.construct!r}; expected one of {CONSTRUCTIONS}")

    def to_dict(self):
        """Plain-data form using the config file's key names."""
        data = asdict(self)
        data["class"] = data.pop("model_class")
        return {key: value for key, value in data.items() if value is not None}

    @property
    def config_hash(self):
        """SHA-256 of the canonical JSON of every field that affects the results."""
        payload = {key: value for key, value in self.to_dict().items() if key not in _UNHASHED_KEYS}
        return sha256_text(json.dumps(payload, sort_keys=True, separators=(",", ":")))


def sha256_text(text):
    """Hex SHA-256 digest of a string."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path):
    """Hex SHA-256 digest of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def load_experiment_config(path):
    """Read an experiment config file."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def parse_seeds(text):
    """Parse ``"0,3,5"`` or ranges like ``"0-19"`` into a list of distinct seeds."""
    seeds = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part:
                start, stop = (int(bound) for bound in part.split("-", 1))
                seeds.extend(range(start, stop + 1))
            else:
                seeds.append(int(part))
    except ValueError as exc:
        raise ConfigError(f"cannot parse seed list {text!r}") from exc
    if not seeds or min(seeds) < 0:
        raise ConfigError(f"seed list {text!r} must name at least one non-negative seed")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"seed list {text!r} repeats a seed")
    return seeds


# --- Inputs ---


def resolve_model(reference, rng_seed=0):
    """A fixture name or a model file path."""
    if reference in FIXTURES:
        model = generate_fixture(reference, rng_seed=rng_seed)
        if isinstance(model, ModelClass):
            return model.truth
        return model
    return load_model(reference)


def resolve_model_class(reference, rng_seed=0):
    """A fixture name or a class file path; a single model becomes a one-member class."""
    if reference in FIXTURES:
        loaded = generate_fixture(reference, rng_seed=rng_seed)
    else:
        try:
            data = json.loads(Path(reference).read_text(encoding="utf-8"))
        except ValueError as exc:
            raise ConfigError(f"{reference} is not valid JSON: {exc}") from exc
        loaded = load_model_class(reference) if "members" in data else load_model(reference)
    if isinstance(loaded, PomdpModel):
        return ModelClass([loaded], 0, default_core_tests(loaded, 1), name=loaded.name)
    return loaded


def learner_params(algorithm, params):
    """Keyword arguments for :func:`psrlab.learners.run_learner`.

    ``iterations`` and ``episodes`` are aliases for the run length; keys the learner
    does not take are rejected.
    """
    try:
        accepted = LEARNER_PARAMS[algorithm]
    except KeyError as exc:
        raise ConfigError(f"unknown algorithm {algorithm!r}; expected one of {sorted(LEARNER_PARAMS)}") from exc
    params = dict(params)
    iterations, episodes = params.pop("iterations", None), params.pop("episodes", None)
    length = iterations if iterations is not None else episodes
    if length is None:
        raise ConfigError(f"{algorithm} needs a run length (--T)")
    params["iterations" if algorithm == "omle" else "episodes"] = length
    unknown = sorted(set(params) - set(accepted))
    if unknown:
        raise ConfigError(f"{algorithm} does not take {', '.join(unknown)}")
    if algorithm != "omle" and params.get("gamma") is None:
        raise ConfigError(f"{algorithm} needs --gamma")
    return params


# --- Aggregation ---


def mean_stderr(values):
    """Mean and standard error over seeds, ignoring missing entries."""
    values = np.asarray(values, dtype=float)
    count = int(np.sum(~np.isnan(values), axis=0).min()) if values.size else 0
    if count == 0:
        return math.nan, math.nan
    mean = np.nanmean(values, axis=0)
    stderr = np.nanstd(values, axis=0, ddof=1) / math.sqrt(count) if count > 1 else np.zeros_like(mean)
    return mean, stderr


def aggregate_logs(algorithm, logs):
    """Seed-aggregated curves and final statistics of a set of learner runs."""
    curve_key = "estimation_error" if algorithm == "rfe2d" else "output_suboptimality"
    length = min(len(log.records) for log in logs)
    curves = [[np.nan if entry is None else entry for entry in log.column(curve_key)[:length]] for log in logs]
    curve_mean, curve_stderr = mean_stderr(curves)
    summary = {
        "algorithm": algorithm,
        "seeds": [log.seed for log in logs],
        "curve": {
            "metric": curve_key,
            "mean": np.atleast_1d(curve_mean).tolist(),
            "stderr": np.atleast_1d(curve_stderr).tolist(),
        },
        "final": {},
    }
    if length:
        quarter = max(1, length // 4)
        summary["curve"]["halved_by_end"] = bool(curve_mean[-1] <= 0.5 * curve_mean[quarter - 1])
    per_seed = [log.summary() for log in logs]
    numeric = {key for entry in per_seed for key, item in entry.items() if isinstance(item, (int, float))}
    booleans = {key for entry in per_seed for key, item in entry.items() if isinstance(item, bool)}
    keys = sorted(numeric - booleans)
    for key in keys:
        mean, stderr = mean_stderr([entry.get(key, np.nan) for entry in per_seed])
        summary["final"][key] = {"mean": float(mean), "stderr": float(stderr)}
    if algorithm == "rfe2d":
        errors = [entry.get("final_estimation_error", math.inf) for entry in per_seed]
        summary["seeds_within_0.1"] = sum(error <= 0.1 for error in errors)
    return summary


# --- Commands ---


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


def _json_default(entry):
    if isinstance(entry, np.generic):
        return entry.item()
    if isinstance(entry, np.ndarray):
        return entry.tolist()
    raise TypeError(f"cannot serialize {type(entry).__name__}")


def _run_certify(config, run_dir):
    model = resolve_model(config.model, config.seeds[0])
    brep = build_brep(model, config.construct, config.m, config.inverse_mode)
    residual = validate_brep(brep, model)
    save_brep(brep, run_dir / "brep.json")
    reports = []
    for seed in config.seeds:
        report = certify_stability(brep, rng_seed=seed)
        logger.info("Certificate for %s, seed %d:\n%s", model.name or config.model, seed, report.format_table())
        _write_json(run_dir / f"certificate-{seed}.json", {"seed": seed, "residual": residual, **report.to_dict()})
        reports.append(report)
    lambda_lo, lambda_lo_stderr = mean_stderr([report.lambda_lo for report in reports])
    return {
        "model": model.name or config.model,
        "construct": config.construct,
        "m": config.m,
        "residual": residual,
        "lambda_hi": reports[0].lambda_hi,
        "lambda_lo": {"mean": float(lambda_lo), "stderr": float(lambda_lo_stderr)},
        "exact": reports[0].exact,
    }


def _learn_one(algorithm, reference, seed, params):
    """Run one seed; module-level so a process pool can pickle it."""
    model_class = resolve_model_class(reference)
    _, log = run_learner(algorithm, model_class, seed, **params)
    return log


def _run_learn(config, run_dir):
    params = learner_params(config.algorithm, config.params)
    jobs = [(config.algorithm, config.model_class, seed, params) for seed in config.seeds]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            logs = list(pool.map(_learn_one, *zip(*jobs)))
    else:
        logs = [_learn_one(*job) for job in jobs]
    for log in logs:
        log.to_csv(run_dir / f"seed-{log.seed}.csv")
        (run_dir / f"seed-{log.seed}.json").write_text(log.to_json() + "\n", encoding="utf-8")
    return aggregate_logs(config.algorithm, logs)


def _run_verify(config, run_dir):
    suite = "eluder" if config.command == "eluder-suite" else config.suite
    try:
        result = run_suite(suite, config.seeds, **config.params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for suite {suite}: {exc}") from exc
    payload = result.to_dict()
    _write_json(run_dir / "suite.json", payload)
    return payload


RUNNERS = {
    "certify": _run_certify,
    "learn": _run_learn,
    "verify": _run_verify,
    "eluder-suite": _run_verify,
}


def _generate(config):
    fixture = generate_fixture(config.fixture, config.fixture_params, config.seeds[0])
    out = Path(config.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(fixture, ModelClass):
        save_model_class(fixture, out, window=fixture.core.window or 1)
    else:
        save_model(fixture, out)
    return {"fixture": config.fixture, "out": str(out), "sha256": sha256_file(out)}


def _manifest(config, run_dir):
    files = sorted(path.name for path in run_dir.iterdir() if path.is_file())
    return {
        "command": config.command,
        "config": config.to_dict(),
        "config_hash": config.config_hash,
        "seeds": list(config.seeds),
        "versions": {
            "psrlab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "files": {name: sha256_file(run_dir / name) for name in files},
    }


def run_experiment(config):
    """Run one experiment and write its artifacts.

    Args:
        config (ExperimentConfig): The experiment.

    Returns:
        tuple[int, dict]: Exit status (0 on success, 1 when a verification suite fails) and
        the summary printed on stdout. The summary carries ``run_dir`` for commands that
        write one.
    """
    config.validate()
    with _enumeration_cap(config.cap):
        if config.command == "generate":
            return 0, _generate(config)
        return _run_in_directory(config)


@contextmanager
def _enumeration_cap(cap):
    """Set ``PSRLAB_CAP`` for the duration of one experiment, restoring the previous value after."""
    if cap is None:
        yield
        return
    previous = os.environ.get(CAP_ENV_VAR)
    os.environ[CAP_ENV_VAR] = str(cap)
    try:
        yield
    finally:
        if previous is None:
            os.environ.pop(CAP_ENV_VAR, None)
        else:
            os.environ[CAP_ENV_VAR] = previous


def _run_in_directory(config):
    output = Path(config.output)
    output.mkdir(parents=True, exist_ok=True)
    run_dir = output / f"{config.command}-{config.config_hash[:12]}"
    staging = Path(tempfile.mkdtemp(prefix=f".{run_dir.name}.", dir=output))
    try:
        summary = RUNNERS[config.command](config, staging)
        summary = {"config_hash": config.config_hash, **summary}
        _write_json(staging / "summary.json", summary)
        write_metrics(staging / "metrics.prom")
        _write_json(staging / "manifest.json", _manifest(config, staging))
        if run_dir.exists():
            shutil.rmtree(run_dir)
        os.replace(staging, run_dir)
    finally:
        if staging.exists():
            shutil.rmtree(staging)
    logger.info("Wrote %s", run_dir)
    status = 0 if summary.get("passed", True) else 1
    return status, {**summary, "run_dir": str(run_dir)}


# --- Entry point ---


def error_payload(exc):
    """Structured error JSON for a failed command."""
    payload = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, FileNotFoundError):
        payload["path"] = None if exc.filename is None else str(exc.filename)
    if isinstance(exc, CapacityError):
        payload.update({"operation": exc.operation, "required": exc.required, "cap": exc.cap})
    return payload


def build_parser():
    """Argument parser for the ``psrlab`` command."""
    parser = argparse.ArgumentParser(prog="psrlab", description="Desk-scale laboratory for B-stable PSRs")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    commands = parser.add_subparsers(dest="command", required=True)

    def add_common(sub, seeds_default="0"):
        sub.add_argument("--seeds", default=seeds_default, help="comma list or ranges, e.g. 0-19")
        sub.add_argument("--output", default="results")
        sub.add_argument("--cap", type=int, default=None, help=f"enumeration cap; overrides {CAP_ENV_VAR}")

    certify = commands.add_parser("certify", help="build a B-representation and certify its stability")
    certify.add_argument("--model", required=True, help="model file or fixture name")
    certify.add_argument("--construct", choices=CONSTRUCTIONS, default="revealing")
    certify.add_argument("--m", type=int, default=1)
    certify.add_argument("--inverse-mode", choices=("pseudo", "l1-left"), default="pseudo")
    add_common(certify)

    learn = commands.add_parser("learn", help="run a learner over seeds")
    learn.add_argument("--class", dest="model_class", required=True, help="class file or fixture name")
    learn.add_argument("--alg", dest="algorithm", choices=sorted(LEARNER_PARAMS), required=True)
    learn.add_argument("--T", dest="length", type=int, required=True, help="iterations (omle) or episodes")
    learn.add_argument("--gamma", type=float)
    learn.add_argument("--beta", type=float)
    learn.add_argument("--eta", type=float)
    learn.add_argument("--delta", type=float)
    learn.add_argument("--workers", type=int, default=1, help="seeds run in parallel processes")
    add_common(learn)

    verify = commands.add_parser("verify", help="run a verification suite")
    verify.add_argument("--suite", required=True, choices=tuple(SUITES))
    add_common(verify)

    eluder = commands.add_parser("eluder-suite", help="run the randomized Eluder and spanner checks")
    add_common(eluder)

    generate = commands.add_parser("generate", help="write a fixture to a JSON file")
    generate.add_argument("--fixture", required=True, choices=sorted(FIXTURES))
    generate.add_argument("--out", required=True)
    generate.add_argument("--seeds", default="0")

    run = commands.add_parser("run", help="run an experiment config file")
    run.add_argument("--config", required=True)
    run.add_argument("--output", default=None)
    return parser


def config_from_args(args):
    """Build an :class:`ExperimentConfig` from parsed arguments."""
    if args.command == "run":
        config = load_experiment_config(args.config)
        if args.output is not None:
            config.output = args.output
        return config
    fields = {"command": args.command, "seeds": parse_seeds(args.seeds)}
    for name in _ARG_FIELDS:
        if getattr(args, name, None) is not None:
            fields[name] = getattr(args, name)
    if args.command == "learn":
        params = {"iterations" if args.algorithm == "omle" else "episodes": args.length}
        for name in ("gamma", "beta", "eta", "delta"):
            if getattr(args, name) is not None:
                params[name] = getattr(args, name)
        fields["params"] = params
    config = ExperimentConfig(**fields)
    config.validate()
    return config


def main(argv=None):
    """Entry point of the ``psrlab`` command; returns the exit status."""
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)-7s %(name)s : %(message)s")
    try:
        config = config_from_args(args)
        status, summary = run_experiment(config)
    except (ConfigError, FileNotFoundError) as exc:
        print(json.dumps(error_payload(exc), sort_keys=True))
        return 2
    except (PsrLabError, OSError) as exc:
        print(json.dumps(error_payload(exc), sort_keys=True))
        return 1
    print(json.dumps(summary, indent=2, sort_keys=True, default=_json_default))
    return status


if __name__ == "__main__":
    sys.exit(main())
