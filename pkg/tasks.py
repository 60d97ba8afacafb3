"""Invoke tasks for psrlab: linting, tests, docs, release notes and the standard experiments.

Licensed under the Apache License, Version 2.0.
"""

import os

from invoke.collection import Collection
from invoke.exceptions import Exit
from invoke.tasks import task as invoke_task


def is_truthy(arg):
    """Interpret an invoke.yml or environment value as a boolean.

    Raises:
        ValueError: If ``arg`` is not one of the usual yes/no spellings.
    """
    if isinstance(arg, bool):
        return arg

    val = str(arg).lower()
    if val in ("y", "yes", "t", "true", "on", "1"):
        return True
    elif val in ("n", "no", "f", "false", "off", "0"):
        return False
    else:
        raise ValueError(f"Invalid truthy value: `{arg}`")


# Defaults; override in invoke.yml or with INVOKE_PSRLAB_<KEY> environment variables
namespace = Collection("psrlab")
namespace.configure(
    {
        "psrlab": {
            "python_ver": "3.12",
            "poetry_run": True,
            "experiments_dir": os.path.join(os.path.dirname(__file__), "development", "experiments"),
            "zoo_dir": os.path.join(os.path.dirname(__file__), "zoo"),
        }
    }
)


def task(function=None, *args, **kwargs):
    """Register the decorated function with the psrlab namespace as well as with invoke."""

    def task_wrapper(function=None):
        """Create the invoke task and add it to the namespace."""
        if args or kwargs:
            task_func = invoke_task(*args, **kwargs)(function)
        else:
            task_func = invoke_task(function)
        namespace.add_task(task_func)
        return task_func

    if function:
        # The decorator was called with no arguments
        return task_wrapper(function)
    # The decorator was called with arguments
    return task_wrapper


def run_command(context, command, **kwargs):
    """Run a command, inside the poetry environment unless `poetry_run` is disabled."""
    if is_truthy(context.psrlab.poetry_run):
        command = f"poetry run {command}"
    if "command_env" in kwargs:
        kwargs["env"] = {
            **kwargs.get("env", {}),
            **kwargs.pop("command_env"),
        }
    return context.run(command, **kwargs)


# ------------------------------------------------------------------------------
# BUILD
# ------------------------------------------------------------------------------
@task(help={"check": "If enabled, check for outdated dependencies in the poetry.lock file instead of generating a new one."})
def lock(context, check=False):
    """Generate poetry.lock."""
    if check:
        context.run("poetry check")
    else:
        context.run("poetry lock")


@task
def generate_packages(context):
    """Build the sdist and wheel under dist/."""
    context.run("poetry build")


# ------------------------------------------------------------------------------
# EXPERIMENTS
# ------------------------------------------------------------------------------
@task(help={"seeds": "Seed list passed to the random fixtures (default: 0)."})
def generate_model_zoo(context, seeds="0"):
    """Write every named fixture to the zoo directory as JSON."""
    command = f'python scripts/generate_model_zoo.py --out "{context.psrlab.zoo_dir}" --seeds {seeds}'
    run_command(context, command)


@task(
    help={
        "config": "Experiment config file to run; repeatable (default: every file in the experiments directory).",
        "output": "Directory for run directories (default: results).",
    },
    iterable=["config"],
)
def experiment(context, config=None, output="results"):
    """Run experiment config files with `psrlab run`."""
    if not config:
        directory = context.psrlab.experiments_dir
        config = [os.path.join(directory, name) for name in sorted(os.listdir(directory)) if name.endswith(".json")]
    exit_code = 0
    for path in config:
        if not run_command(context, f'psrlab run --config "{path}" --output "{output}"', warn=True):
            exit_code = 1
    if exit_code != 0:
        raise Exit(code=exit_code)


@task
def validate_configs(context):
    """Validate the example experiment configs and any `PSRLAB_SETTINGS` override file."""
    command = f'python development/validate_configs.py "{context.psrlab.experiments_dir}"'
    run_command(context, command)


# ------------------------------------------------------------------------------
# DOCS
# ------------------------------------------------------------------------------
@task
def docs(context):
    """Build and serve docs locally for development."""
    print(">>> Serving Documentation at http://localhost:8001")
    run_command(context, "mkdocs serve -v")


@task
def build_and_check_docs(context):
    """Build the documentation site in strict mode."""
    run_command(context, "mkdocs build --no-directory-urls --strict")


@task(
    help={
        "version": "Version of psrlab to generate the release notes for.",
        "date": "Date of the release (default: today).",
        "keep": "Keep existing release notes files. Useful for testing. (default: False).",
    }
)
def generate_release_notes(context, version="", date="", keep=False):
    """Collect the fragments in changes/ into the release notes for `version`."""
    command = "poetry run towncrier build"
    if not version:
        version = context.run("poetry version --short", hide=True).stdout.strip()
    command += f" --version {version}"
    if date:
        command += f" --date {date}"
    command += " --keep" if keep else " --yes"
    context.run(command)


# ------------------------------------------------------------------------------
# TESTS
# ------------------------------------------------------------------------------
@task
def pylint(context):
    """Run pylint code analysis."""
    command = "pylint --verbose --rcfile pyproject.toml psrlab"
    if not run_command(context, command, warn=True):
        raise Exit(code=1)


@task(aliases=("a",))
def autoformat(context):
    """Rewrite files with ruff format."""
    ruff(context, action=["format"], fix=True)


@task(
    help={
        "action": "Available values are `['lint', 'format']`. Can be used multiple times. (default: `--action lint --action format`)",
        "target": "File or directory to inspect, repeatable (default: all files in the project will be inspected)",
        "fix": "Automatically fix selected actions. May not be able to fix all issues found. (default: False)",
        "output_format": "See https://docs.astral.sh/ruff/settings/#output-format for details. (default: `concise`)",
    },
    iterable=["action", "target"],
)
def ruff(context, action=None, target=None, fix=False, output_format="concise"):
    """Run ruff to perform code formatting and/or linting."""
    if not action:
        action = ["lint", "format"]
    if not target:
        target = ["."]

    exit_code = 0

    if "format" in action:
        command = "ruff format "
        if not fix:
            command += "--check "
        command += " ".join(target)
        if not run_command(context, command, warn=True):
            exit_code = 1

    if "lint" in action:
        command = "ruff check "
        if fix:
            command += "--fix "
        command += f"--output-format {output_format} "
        command += " ".join(target)
        if not run_command(context, command, warn=True):
            exit_code = 1

    if exit_code != 0:
        raise Exit(code=exit_code)


@task
def yamllint(context):
    """Lint mkdocs.yml, invoke.example.yml and any other YAML in the tree."""
    run_command(context, "yamllint . --format standard")


@task
def markdownlint(context, fix=False):
    """Lint Markdown files."""
    # fix mode doesn't scan/report issues it can't fix, so always run scan even after fixing
    if fix:
        command = "pymarkdown fix --recurse docs *.md"
        run_command(context, command)
    command = "pymarkdown scan --recurse docs *.md"
    run_command(context, command)


@task(
    help={
        "label": "Dotted module or directory to test instead of the whole package",
        "failfast": "fail as soon as a single test fails don't run the entire test suite",
        "buffer": "Discard output from passing tests",
        "pattern": "Run only test methods and classes matching this substring",
        "verbose": "Enable verbose test output.",
        "coverage": "Enable coverage reporting. Defaults to False",
    }
)
def unittest(  # noqa: PLR0913
    context,
    label="psrlab",
    failfast=False,
    buffer=True,
    pattern="",
    verbose=False,
    coverage=False,
):
    """Run the psrlab unit tests."""
    if coverage:
        command = f"coverage run --module unittest discover --start-directory {label} --top-level-directory ."
    else:
        command = f"python -m unittest discover --start-directory {label} --top-level-directory ."

    if failfast:
        command += " --failfast"
    if buffer:
        command += " --buffer"
    if pattern:
        command += f" -k '{pattern}'"
    if verbose:
        command += " --verbose"

    run_command(context, command)


@task(help={"export": "Also write `lcov` or `xml` output next to the terminal report."})
def unittest_coverage(context, export=""):
    """Report coverage measured by `invoke unittest --coverage`."""
    run_command(context, "coverage report --skip-covered")
    if export == "lcov":
        run_command(context, "coverage lcov -o lcov.info")
    elif export == "xml":
        run_command(context, "coverage xml -o coverage.xml")
    elif export:
        raise Exit(f"Unknown coverage export `{export}`", code=1)


@task(
    help={
        "failfast": "fail as soon as a single test fails don't run the entire test suite. (default: False)",
        "lint-only": "Only run linters; unit tests will be excluded. (default: False)",
    }
)
def tests(context, failfast=False, lint_only=False):
    """Run every linter, the docs build, config validation and the unit tests."""
    # Cheapest checks first
    print("Running ruff...")
    ruff(context)
    print("Running yamllint...")
    yamllint(context)
    print("Running markdownlint...")
    markdownlint(context)
    print("Running poetry check...")
    lock(context, check=True)
    print("Running pylint...")
    pylint(context)
    print("Running mkdocs...")
    build_and_check_docs(context)
    print("Checking experiment configs...")
    validate_configs(context)
    if not lint_only:
        print("Running unit tests...")
        unittest(context, failfast=failfast, coverage=True)
        unittest_coverage(context, export="lcov")
    print("All tests have passed!")
