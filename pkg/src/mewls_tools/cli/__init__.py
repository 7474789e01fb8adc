import logging
from enum import Enum
from pathlib import Path
from typing import Annotated

import typer

from mewls_tools.models import LogLevel

logger = logging.getLogger(__name__)

app = typer.Typer()


class Example(str, Enum):
    line_with_outliers = "1"
    symmetric = "2"


class Example2Variant(str, Enum):
    four = "four"
    eight = "eight"


def _run(cmd, *args) -> None:
    """
    Run a command body and convert its result or `CommandError` into the exit code
    of the CLI
    """
    from mewls_tools.cmd_funcs import CommandError

    try:
        code = cmd(*args)
    except CommandError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(e.exit_code) from e
    if code:
        raise typer.Exit(code)


@app.callback()
def main(
    log_level: Annotated[
        LogLevel, typer.Option("--log-level", "-l")
    ] = LogLevel.WARNING,
):
    """
    Commands for tracing and diagnosing the maximum-entropy weighted least squares
    branch
    """
    # Set log level of the CLI
    logging.basicConfig(
        format="[%(asctime)s]%(levelname)s:%(name)s:%(message)s",
        level=getattr(logging, log_level),
    )


@app.command()
def gen(
    *,
    example: Annotated[
        Example, typer.Option("--example", help="1: line with outliers, 2: symmetric")
    ],
    variant: Annotated[
        Example2Variant,
        typer.Option("--variant", help="Point set of the symmetric example"),
    ] = Example2Variant.eight,
    seed: Annotated[int, typer.Option("--seed")] = 0,
    noise_sigma2: Annotated[
        float,
        typer.Option("--noise-sigma2", min=0.0, help="Variance of the inlier noise"),
    ] = 0.0,
    out: Annotated[
        Path, typer.Option("--out", "-o", help="Path of the output directory")
    ] = Path("dataset"),
):
    """
    Generate a benchmark dataset
    """
    from mewls_tools.cmd_funcs.gen import gen as gen_

    _run(gen_, int(example.value), variant.value, seed, noise_sigma2, out)


@app.command()
def trace(
    *,
    data: Annotated[
        Path, typer.Option("--data", help="CSV file of an x,y dataset or a problem")
    ],
    target_mse: Annotated[float, typer.Option("--target-mse")],
    grid: Annotated[
        int | None,
        typer.Option("--grid", min=2, help="Number of dense-output samples"),
    ] = None,
    config_path: Annotated[
        Path | None,
        typer.Option("--config", help="YAML or JSON file of continuation settings"),
    ] = None,
    out: Annotated[
        Path, typer.Option("--out", "-o", help="Path of the output directory")
    ] = Path("trace"),
):
    """
    Trace the branch from the unweighted fit down to a target MSE
    """
    from mewls_tools.cmd_funcs.trace import trace as trace_

    _run(trace_, data, target_mse, grid, config_path, out)


@app.command()
def diagnose(
    *,
    run: Annotated[
        Path, typer.Option("--run", help="Output directory of a trace run")
    ],
    core_threshold: Annotated[
        float | None,
        typer.Option("--core-threshold", help="Weight threshold of the core set"),
    ] = None,
    fit_lo: Annotated[float | None, typer.Option("--fit-lo")] = None,
    fit_hi: Annotated[float | None, typer.Option("--fit-hi")] = None,
):
    """
    Compute the value curve, core set, limit interpolant and rates of a traced run
    """
    from mewls_tools.cmd_funcs.diagnose import diagnose as diagnose_

    _run(diagnose_, run, core_threshold, fit_lo, fit_hi)


@app.command()
def oracle(
    *,
    data: Annotated[Path, typer.Option("--data")],
    mse: Annotated[float, typer.Option("--mse")],
    resolution: Annotated[
        int, typer.Option("--resolution", min=2, help="Simplex grid cells per edge")
    ] = 200,
    run: Annotated[
        Path | None,
        typer.Option("--run", help="A trace run of the same problem to compare with"),
    ] = None,
    out: Annotated[
        Path, typer.Option("--out", "-o", help="Path of the output directory")
    ] = Path("oracle"),
):
    """
    Solve the maximum-entropy problem by grid search on a small problem
    """
    from mewls_tools.cmd_funcs.oracle import oracle as oracle_

    _run(oracle_, data, mse, resolution, run, out)
