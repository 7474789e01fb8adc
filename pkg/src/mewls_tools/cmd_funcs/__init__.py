# This package contains the functions that implement the individual commands of the CLI.

import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from mewls_tools.__about__ import __version__
from mewls_tools.models import RUN_MANIFEST_ADAPTER, RunManifest
from mewls_tools.tools import read_data

logger = logging.getLogger(__name__)

MANIFEST_FILE_NAME = "manifest.json"

# Exit codes of the CLI
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TERMINATION = 3


class CommandError(Exception):
    """
    A failure of a command that maps to a CLI exit code
    """

    def __init__(self, msg: str, exit_code: int = EXIT_USAGE):
        super().__init__(msg)
        self.exit_code = exit_code


def new_manifest(**fields: Any) -> RunManifest:
    """
    Start the manifest of a run, recording the command line and the tool version
    """
    return RunManifest(
        command_line=[Path(sys.argv[0]).name, *sys.argv[1:]],
        tool_version=__version__,
        started=datetime.now(timezone.utc),
        **fields,
    )


def write_manifest(manifest: RunManifest, output_dir: Path) -> None:
    """
    Stamp the finishing time of a run and write its manifest to the output directory
    """
    manifest = manifest.model_copy(update={"finished": datetime.now(timezone.utc)})
    manifest_path = output_dir / MANIFEST_FILE_NAME
    manifest_path.write_bytes(RUN_MANIFEST_ADAPTER.dump_json(manifest, indent=2))
    logger.info("Wrote run manifest to %s", manifest_path)


def read_manifest(run_dir: Path) -> RunManifest:
    """
    :raises CommandError: If the run directory has no readable manifest
    """
    from pydantic import ValidationError

    manifest_path = run_dir / MANIFEST_FILE_NAME
    if not manifest_path.is_file():
        msg = f"There is no run manifest at {manifest_path}"
        raise CommandError(msg)
    try:
        return read_data(manifest_path, RUN_MANIFEST_ADAPTER)
    except ValidationError as e:
        msg = f"The run manifest at {manifest_path} is corrupt: {e}"
        raise CommandError(msg) from e
