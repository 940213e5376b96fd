import sys
import os
import json
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from autodiff.layers import LayerSpec, Parameter
from utils.exceptions import ArtifactIOError
from utils.io import atomic_open, write_json

CHECKPOINT_FORMAT_VERSION: int = 1
BLOB_DTYPE: str = "<f8"


def checkpoint_paths(prefix: str) -> Tuple[str, str]:
    """Manifest and blob file names for a checkpoint prefix."""
    return f"{prefix}.json", f"{prefix}.bin"


def save_checkpoint(
    prefix: str,
    parameters: Sequence[Parameter],
    layers: Dict[str, List[LayerSpec]],
    metadata: Dict[str, Any],
) -> Tuple[str, str]:
    """
    Writes a JSON manifest plus a flat little-endian float64 blob.

    Parameters are laid out in manifest order; each entry records its name,
    shape and element offset into the blob.
    """
    entries = []
    offset = 0
    for parameter in parameters:
        entries.append(
            {"name": parameter.name, "shape": list(parameter.shape), "offset": offset}
        )
        offset += parameter.value.size

    manifest_path, blob_path = checkpoint_paths(prefix)
    blob = np.concatenate([p.value.reshape(-1) for p in parameters]).astype(BLOB_DTYPE)
    with atomic_open(blob_path, "wb") as handle:
        handle.write(blob.tobytes())

    write_json(
        manifest_path,
        {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "blob": os.path.basename(blob_path),
            "dtype": BLOB_DTYPE,
            "size": offset,
            "parameters": entries,
            "layers": {
                group: [spec.model_dump(mode="json") for spec in specs]
                for group, specs in layers.items()
            },
            "metadata": metadata,
        },
    )
    return manifest_path, blob_path


def load_checkpoint(prefix: str) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """
    Reads a checkpoint written by `save_checkpoint`.

    Returns:
        Tuple[Dict[str, Any], Dict[str, np.ndarray]]: The manifest and the arrays by parameter name.

    Raises:
        ArtifactIOError: On missing files, version mismatch or a blob of the wrong size.
    """
    manifest_path, blob_path = checkpoint_paths(prefix)
    try:
        with open(manifest_path, "r", encoding="utf-8") as handle:
            manifest = json.load(handle)
        blob = np.fromfile(blob_path, dtype=BLOB_DTYPE)
    except (OSError, ValueError) as e:
        raise ArtifactIOError(f"cannot read checkpoint {prefix}: {e}") from e

    if manifest.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ArtifactIOError(f"unsupported checkpoint version {manifest.get('format_version')}")
    if blob.size != manifest["size"]:
        raise ArtifactIOError(f"blob holds {blob.size} values, manifest expects {manifest['size']}")

    arrays: Dict[str, np.ndarray] = {}
    for entry in manifest["parameters"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start = entry["offset"]
        arrays[entry["name"]] = blob[start : start + count].astype(np.float64).reshape(entry["shape"])
    return manifest, arrays
