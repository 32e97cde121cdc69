"""Atomic text and YAML output shared by every report and artifact writer."""

import os

import yaml

MANIFEST_PREFIX = "# manifest "


def write_text(path, text):
    """Write ``text`` to ``path`` through a temporary file."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="\n") as f:
        f.write(text)
    os.replace(tmp, path)
    return text


def dump_yaml(data, file_path=None, digest=None):
    """
    YAML text of ``data``, optionally written to ``file_path``.

    Parameters:
        data (dict): Plain data.
        file_path (str): Target file; written atomically when given.
        digest (str): Manifest digest appended as a ``# manifest`` trailer.

    Returns:
        str: The text written.
    """
    text = yaml.safe_dump(data, sort_keys=False)
    if digest is not None:
        text += f"{MANIFEST_PREFIX}{digest}\n"
    if file_path:
        write_text(file_path, text)
    return text
