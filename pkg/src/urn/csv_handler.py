import json
import logging
import os

import pandas as pd

CONFIG_PREFIX = "# config: "


def config_header(config):
    return CONFIG_PREFIX + json.dumps(config, sort_keys=True, default=str)


def write_frame(df, file_path, config=None):
    """
    Write a DataFrame as CSV, preceded by a ``# config: {...}`` comment line.

    Args:
        df: table to write
        file_path: destination (parent directories are created)
        config: dict embedded as sorted JSON in the header line
    """
    directory = os.path.dirname(file_path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    with open(file_path, "w", newline="") as handle:
        if config is not None:
            handle.write(config_header(config) + "\n")
        df.to_csv(handle, index=False, lineterminator="\n", float_format="%.12g")
    logging.info(f"Wrote {len(df)} rows to {file_path}")
    return file_path


def load_frame(file_path):
    """Read a CSV written by ``write_frame``; returns (DataFrame, config dict or None)."""
    if not file_path.endswith(".csv"):
        raise ValueError("Unsupported file format. Please use .csv")

    config = None
    with open(file_path) as handle:
        first = handle.readline()
    if first.startswith(CONFIG_PREFIX):
        config = json.loads(first[len(CONFIG_PREFIX):])

    df = pd.read_csv(file_path, comment="#")
    return df, config


def write_json(payload, file_path):
    directory = os.path.dirname(file_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(file_path, "w") as handle:
        json.dump(payload, handle, sort_keys=True, indent=2, default=str)
        handle.write("\n")
    logging.info(f"Wrote {file_path}")
    return file_path


def trajectories_frame(trajectories, coords="gaps"):
    """Stack trajectories into one table with a leading ``run`` column."""
    frames = []
    for trajectory in trajectories:
        df = trajectory.to_frame(coords)
        df.insert(0, "run", trajectory.index)
        frames.append(df)
    return pd.concat(frames, ignore_index=True)
