"""Run manifests: what was run, with which parameters, producing what."""

import dataclasses
import hashlib
import time

import yaml

from ..errors import FormatError
from ..reports import dump_yaml


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def array_digest(array):
    return hashlib.sha256(array.tobytes()).hexdigest()


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item"):
        return value.item()
    return value


@dataclasses.dataclass
class RunManifest:
    """
    Record of one command run.

    Only command, parameters, mode, seed and version enter the digest, so two
    runs with equal manifests stamp the same digest into their artifacts.
    """

    command: str
    parameters: dict
    mode: str = None
    seed: int = 0
    version: str = None
    timing: dict = dataclasses.field(default_factory=dict)
    inputs: dict = dataclasses.field(default_factory=dict)
    outputs: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if self.version is None:
            from .. import __version__

            self.version = __version__
        self.parameters = _plain(self.parameters)
        self._started = time.perf_counter()

    def deterministic(self):
        return {
            "command": self.command,
            "parameters": self.parameters,
            "mode": self.mode,
            "seed": self.seed,
            "version": self.version,
        }

    @property
    def digest(self):
        text = yaml.safe_dump(self.deterministic(), sort_keys=True)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def add_input(self, path):
        self.inputs[str(path)] = file_digest(path)

    def add_output(self, path):
        self.outputs[str(path)] = file_digest(path)

    def finish(self):
        self.timing["seconds"] = round(time.perf_counter() - self._started, 6)
        return self

    def to_dict(self):
        data = self.deterministic()
        data.update(digest=self.digest, timing=self.timing, inputs=self.inputs, outputs=self.outputs)
        return data

    def to_yaml(self, file_path=None):
        return dump_yaml(self.to_dict(), file_path, self.digest)

    @classmethod
    def from_yaml(cls, file_path):
        with open(file_path) as f:
            data = yaml.safe_load(f)
        if not isinstance(data, dict) or "command" not in data:
            raise FormatError(file_path, 0, "not a run manifest")
        recorded = data.pop("digest", None)
        fields = {f.name for f in dataclasses.fields(cls)}
        manifest = cls(**{k: v for k, v in data.items() if k in fields})
        if recorded is not None and recorded != manifest.digest:
            raise FormatError(file_path, 0, "manifest digest does not match its fields")
        return manifest
