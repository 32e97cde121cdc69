"""
Plain-text artifact formats.

    .khg   hypergraph: ``khg k n_1 ... n_k`` then one edge per line
    .w3g   weighted 3-graph: ``w3g nA nB nC`` then ``a b c w`` for non-zero cells
    .part  layered partition: ``part k`` then one line of labels per part
    .audit homogeneity audit: ``audit <kind> <eps> <pass|fail> <mass>`` then records
    .links link partitions: ``links k r <provenance>`` then
           ``<part>:<vertex> ... | <side> | <labels ...>``

Lines starting with ``#`` are comments; writers end every file with
``# manifest <digest>``. Parse errors carry the byte offset of the bad line.
"""

import numpy as np

from ..errors import FormatError
from ..hypercore import KPartiteHypergraph, WeightedTripartite
from ..oracles import TableOracle
from ..partitions import LayeredPartition, PartPartition
from ..reports import MANIFEST_PREFIX, dump_yaml, write_text


def write_yaml(path, data, digest=None):
    """YAML artifact with the ``# manifest`` trailer."""
    return dump_yaml(data, path, digest)


def _finish(lines, digest):
    if digest is not None:
        lines.append(f"{MANIFEST_PREFIX}{digest}")
    return "\n".join(lines) + "\n"


def _lines(path):
    """(byte offset, text) of every non-comment line."""
    with open(path, "rb") as f:
        data = f.read()
    offset = 0
    for raw in data.split(b"\n"):
        start = offset
        offset += len(raw) + 1
        try:
            line = raw.decode("ascii").strip()
        except UnicodeDecodeError:
            raise FormatError(path, start, "non-ASCII content")
        if line and not line.startswith("#"):
            yield start, line


def manifest_digest(path):
    """The digest of the trailing ``# manifest`` line, or None."""
    with open(path, "rb") as f:
        lines = f.read().decode("ascii", errors="replace").rstrip("\n").split("\n")
    last = lines[-1] if lines else ""
    return last[len(MANIFEST_PREFIX):].strip() if last.startswith(MANIFEST_PREFIX) else None


def _ints(path, offset, fields):
    try:
        return [int(v) for v in fields]
    except ValueError:
        raise FormatError(path, offset, f"expected integers, got {' '.join(fields)!r}")


def _header(path, lines, magic):
    try:
        offset, line = next(lines)
    except StopIteration:
        raise FormatError(path, 0, f"missing '{magic}' header")
    fields = line.split()
    if fields[0] != magic:
        raise FormatError(path, offset, f"expected '{magic}' header, got {fields[0]!r}")
    return offset, fields[1:]


def format_khg(H, digest=None):
    lines = ["khg " + " ".join(str(n) for n in (H.k,) + H.part_sizes)]
    lines += [" ".join(str(int(v)) for v in e) for e in H.edges()]
    return _finish(lines, digest)


def write_khg(path, H, digest=None):
    return write_text(path, format_khg(H, digest))


def read_khg(path):
    lines = _lines(path)
    offset, fields = _header(path, lines, "khg")
    values = _ints(path, offset, fields)
    if not values or len(values) != values[0] + 1 or values[0] < 2:
        raise FormatError(path, offset, "header must read 'khg k n_1 ... n_k'")
    k, sizes = values[0], tuple(values[1:])
    cells = np.zeros(sizes, dtype=bool)
    for offset, line in lines:
        edge = _ints(path, offset, line.split())
        if len(edge) != k:
            raise FormatError(path, offset, f"edge has {len(edge)} vertices, expected {k}")
        if any(not 0 <= v < n for v, n in zip(edge, sizes)):
            raise FormatError(path, offset, f"edge {edge} lies outside parts {sizes}")
        cells[tuple(edge)] = True
    return KPartiteHypergraph(cells)


def format_w3g(W, digest=None):
    lines = ["w3g " + " ".join(str(n) for n in W.part_sizes)]
    w = W.weights
    for a, b, c in np.argwhere(w > 0):
        lines.append(f"{a} {b} {c} {float(w[a, b, c])!r}")
    return _finish(lines, digest)


def write_w3g(path, W, digest=None):
    return write_text(path, format_w3g(W, digest))


def read_w3g(path):
    lines = _lines(path)
    offset, fields = _header(path, lines, "w3g")
    sizes = tuple(_ints(path, offset, fields))
    if len(sizes) != 3:
        raise FormatError(path, offset, "header must read 'w3g nA nB nC'")
    weights = np.zeros(sizes, dtype=np.float64)
    for offset, line in lines:
        fields = line.split()
        if len(fields) != 4:
            raise FormatError(path, offset, "expected 'a b c w'")
        cell = _ints(path, offset, fields[:3])
        try:
            w = float(fields[3])
        except ValueError:
            raise FormatError(path, offset, f"weight {fields[3]!r} is not a number")
        if not 0 <= w <= 1 or any(not 0 <= v < n for v, n in zip(cell, sizes)):
            raise FormatError(path, offset, f"cell {cell} with weight {w} is out of range")
        weights[tuple(cell)] = w
    return WeightedTripartite(weights)


def format_part(partition, digest=None):
    lines = [f"part {partition.k}"]
    lines += [" ".join(str(int(l)) for l in p.labels) for p in partition]
    return _finish(lines, digest)


def write_part(path, partition, digest=None):
    return write_text(path, format_part(partition, digest))


def read_part(path):
    lines = _lines(path)
    offset, fields = _header(path, lines, "part")
    values = _ints(path, offset, fields)
    if len(values) != 1 or values[0] < 1:
        raise FormatError(path, offset, "header must read 'part k'")
    parts = []
    for offset, line in lines:
        try:
            parts.append(PartPartition(_ints(path, offset, line.split()), part=len(parts)))
        except ValueError as e:
            if isinstance(e, FormatError):
                raise
            raise FormatError(path, offset, str(e))
    if len(parts) != values[0]:
        raise FormatError(path, offset, f"expected {values[0]} label lines, found {len(parts)}")
    return LayeredPartition(parts)


def format_audit(report, kind="homogeneity", digest=None):
    verdict = "pass" if report.passed else "fail"
    lines = [f"audit {kind} {float(report.eps)!r} {verdict} {report.mass}"]
    for labels, d, ok in report.records():
        lines.append(" ".join(str(l) for l in labels) + f" {d!r} {'homogeneous' if ok else 'inhomogeneous'}")
    return _finish(lines, digest)


def write_audit(path, report, kind="homogeneity", digest=None):
    return write_text(path, format_audit(report, kind, digest))


def read_audit(path):
    """Header fields and records of an ``.audit`` file, as plain data."""
    lines = _lines(path)
    offset, fields = _header(path, lines, "audit")
    if len(fields) != 4 or fields[2] not in ("pass", "fail"):
        raise FormatError(path, offset, "header must read 'audit <kind> <eps> <pass|fail> <mass>'")
    records = []
    for offset, line in lines:
        parts = line.split()
        if len(parts) < 3 or parts[-1] not in ("homogeneous", "inhomogeneous"):
            raise FormatError(path, offset, "record must end with a density and a verdict")
        records.append((tuple(_ints(path, offset, parts[:-2])), float(parts[-2]), parts[-1] == "homogeneous"))
    return {
        "kind": fields[0],
        "eps": float(fields[1]),
        "passed": fields[2] == "pass",
        "mass": int(fields[3]),
        "records": records,
    }


def _pin_text(pins):
    return " ".join(f"{p}:{v}" for p, v in pins) if pins else "-"


def format_links(table, k, r, provenance, digest=None):
    """
    Parameters:
        table (dict): ``{(pins, side): PartPartition}``, pins being (part, vertex) pairs.
    """
    lines = [f"links {k} {r} {provenance}"]
    for (pins, side), p in table.items():
        lines.append(f"{_pin_text(pins)} | {side} | " + " ".join(str(int(l)) for l in p.labels))
    return _finish(lines, digest)


def oracle_table(H, oracle):
    """Every (pins, side) answer of ``oracle`` on ``H``."""
    table = {}
    for left in range(H.k):
        for right in range(left + 1, H.k):
            for pins in H.pin_tuples((left, right)):
                for side in (left, right):
                    table[(tuple(pins), side)] = oracle.partition(pins, side)
    return table


def write_links(path, H, oracle, digest=None):
    table = oracle_table(H, oracle)
    return write_text(path, format_links(table, H.k, oracle.r, oracle.provenance or "external-file", digest))


def read_links(path):
    """Read a ``.links`` sidecar as a TableOracle."""
    lines = _lines(path)
    offset, fields = _header(path, lines, "links")
    if len(fields) != 3:
        raise FormatError(path, offset, "header must read 'links k r <provenance>'")
    k, r = _ints(path, offset, fields[:2])
    table = {}
    for offset, line in lines:
        sections = [s.strip() for s in line.split("|")]
        if len(sections) != 3:
            raise FormatError(path, offset, "expected '<pins> | <side> | <labels>'")
        pins = ()
        if sections[0] != "-":
            try:
                pins = tuple(tuple(int(x) for x in pin.split(":")) for pin in sections[0].split())
            except ValueError:
                raise FormatError(path, offset, f"malformed pins {sections[0]!r}")
        if len(pins) != k - 2 or any(len(pin) != 2 for pin in pins):
            raise FormatError(path, offset, f"expected {k - 2} pins of the form part:vertex")
        side = _ints(path, offset, [sections[1]])[0]
        try:
            table[(pins, side)] = PartPartition(_ints(path, offset, sections[2].split()), part=side)
        except ValueError as e:
            if isinstance(e, FormatError):
                raise
            raise FormatError(path, offset, str(e))
    return TableOracle(table, r, provenance=fields[2])
