import logging
from pathlib import Path
from typing import Literal

from mewls_tools.cmd_funcs import EXIT_OK, new_manifest, write_manifest
from mewls_tools.datagen import example1, example2, save_dataset_csv
from mewls_tools.models import DatasetConfig
from mewls_tools.tools import create_or_replace_dir

logger = logging.getLogger(__name__)

DATASET_FILE_NAME = "dataset.csv"


def gen(
    example: Literal[1, 2],
    variant: Literal["four", "eight"],
    seed: int,
    noise_sigma2: float,
    output_dir: Path,
) -> int:
    """
    Generate one of the benchmark datasets and write it, with a manifest, to a fresh
    output directory

    :param example: 1 for the line-plus-outliers data, 2 for the symmetric data
    :param variant: The symmetric variant (example 2 only)
    :param seed: The generator seed (example 1 only)
    :param noise_sigma2: The inlier noise variance (example 1 only)
    :param output_dir: The output directory, replaced if it exists
    :return: The exit code
    """
    dataset_config = None
    if example == 1:
        dataset_config = DatasetConfig(seed=seed, noise_sigma2=noise_sigma2)
        dataset, p = example1(dataset_config)
    else:
        dataset, p = example2(variant)

    create_or_replace_dir(output_dir)
    save_dataset_csv(dataset, output_dir / DATASET_FILE_NAME)
    write_manifest(
        new_manifest(
            dataset_config=dataset_config,
            problem_fingerprint=p.fingerprint,
            extra={
                "example": example,
                "variant": variant if example == 2 else None,
                "rng_algorithm": dataset.rng_algorithm,
            },
        ),
        output_dir,
    )
    logger.info("Generated example %d dataset with %d points", example, p.m)
    return EXIT_OK
