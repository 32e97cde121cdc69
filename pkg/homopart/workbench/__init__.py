from .generate import FAMILIES, Instance, InstanceSpec, generate
from .manifest import RunManifest
