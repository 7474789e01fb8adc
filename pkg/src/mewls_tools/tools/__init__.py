import json
import logging
from pathlib import Path
from shutil import rmtree
from typing import Any

import yaml
from pydantic import TypeAdapter

try:
    # libyaml-backed dumper when the C extension is available
    from yaml import CSafeDumper as SafeDumper
except ImportError:
    from yaml import SafeDumper  # type: ignore

logger = logging.getLogger(__name__)


def create_or_replace_dir(dir_path: Path) -> None:
    """
    Make `dir_path` an empty directory, removing whatever directory tree was there

    Output directories of the commands are always written from scratch so a run never
    mixes files with an earlier run.
    """
    if dir_path.exists():
        rmtree(dir_path)
        logger.info("Removed previous output at %s", dir_path)
    dir_path.mkdir(parents=True)
    logger.info("Created output directory %s", dir_path)


def write_data(
    data: Any,
    output_dir: Path,
    base_file_name: str,
    data_adapter: TypeAdapter | None = None,
) -> None:
    """
    Write a report as `<base_file_name>.json` and `<base_file_name>.yaml`

    :param data: The report
    :param output_dir: The directory to write into
    :param base_file_name: The file name without suffix
    :param data_adapter: The adapter that dumps `data` to JSON-compatible Python
        objects. Without one, `data` must already be JSON-compatible.
    """
    plain = (
        data if data_adapter is None else data_adapter.dump_python(data, mode="json")
    )

    json_path = output_dir / f"{base_file_name}.json"
    json_path.write_text(json.dumps(plain, indent=2))

    yaml_path = output_dir / f"{base_file_name}.yaml"
    with yaml_path.open("w") as f:
        yaml.dump(plain, f, Dumper=SafeDumper, sort_keys=False)

    logger.info("Wrote %s and %s", json_path, yaml_path)


def read_data(file: Path, type_adapter: TypeAdapter) -> Any:
    """
    Validate a JSON report file back into its record type
    """
    return type_adapter.validate_json(file.read_bytes())


def load_mapping(file: Path) -> dict[str, Any]:
    """
    Load a YAML or JSON file (JSON being a subset of YAML) holding a mapping

    An empty file gives an empty mapping.

    :raises OSError: If the file cannot be read
    :raises yaml.YAMLError: If the file is not valid YAML
    :raises ValueError: If the top-level value is not a mapping
    """
    content = yaml.safe_load(file.read_text())
    if content is None:
        return {}
    if not isinstance(content, dict):
        msg = f"{file} holds a {type(content).__name__}, not a mapping"
        raise ValueError(msg)
    return content
