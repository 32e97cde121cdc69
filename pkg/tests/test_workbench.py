import numpy as np
import pytest
import yaml

from homopart.auditor import homogeneity_audit
from homopart.errors import FormatError, ParameterError
from homopart.hypercore import KPartiteHypergraph, WeightedTripartite
from homopart.partitions import LayeredPartition, PartPartition
from homopart.workbench import formats
from homopart.workbench.cli import FAILED, OK, USAGE, load_construction, main
from homopart.workbench.generate import InstanceSpec, generate
from homopart.workbench.manifest import RunManifest

from conftest import random_cells


@pytest.mark.parametrize("seed", range(3))
def test_product_instance_repeats_one_graph(seed):
    instance = generate(InstanceSpec("product", n=12, k=3, r=3, seed=seed))
    cells = instance.H.cells
    for c in range(12):
        assert np.array_equal(cells[:, :, c], cells[:, :, 0])
    assert (instance.labels[2] == 1).all()


@pytest.mark.parametrize("family", ["planted-boxes", "product"])
def test_planted_labels_are_homogeneous_on_every_link(family):
    instance = generate(InstanceSpec(family, n=9, k=3, r=3, seed=5))
    oracle = instance.oracle
    for pins in instance.H.pin_tuples((0, 1)):
        pair = oracle.pair(pins, 0, 1)
        assert homogeneity_audit(instance.H.link(pins), pair, 0.0).mass == 0


def test_unplanted_families_have_no_oracle():
    instance = generate(InstanceSpec("interval-threshold", n=6, k=3))
    assert instance.oracle is None
    assert instance.H.cells[5, 5, 5] and not instance.H.cells[0, 0, 0]
    empty = generate(InstanceSpec("uniform-random", n=4, density=0.0))
    assert empty.H.edge_count == 0


def test_instance_spec_validation():
    with pytest.raises(ParameterError):
        InstanceSpec("planted-boxes", r=0)
    with pytest.raises(ParameterError):
        InstanceSpec("product", k=2)
    with pytest.raises(ParameterError):
        InstanceSpec("spiral")
    with pytest.raises(ParameterError):
        InstanceSpec("planted-boxes", n=2, r=3)
    assert InstanceSpec("uniform-random", n=(2, 3, 4), r=1).part_sizes == (2, 3, 4)


def test_khg_and_part_files(tmp_path):
    H = KPartiteHypergraph(random_cells(1, (3, 4, 2)))
    path = tmp_path / "h.khg"
    formats.write_khg(path, H, "abc")
    assert formats.read_khg(path) == H
    assert formats.manifest_digest(path) == "abc"

    partition = LayeredPartition([PartPartition([1, 1, 0], 0), PartPartition([1, 2, 2, 1], 1), PartPartition([1, 1], 2)])
    formats.write_part(tmp_path / "h.part", partition)
    assert formats.read_part(tmp_path / "h.part") == partition
    assert formats.manifest_digest(tmp_path / "h.part") is None


def test_w3g_keeps_exact_weights(tmp_path):
    weights = np.zeros((2, 3, 2))
    weights[1, 2, 0] = 0.125
    weights[0, 0, 1] = 1 / 3
    path = tmp_path / "w.w3g"
    formats.write_w3g(path, WeightedTripartite(weights))
    assert np.array_equal(formats.read_w3g(path).weights, weights)


def test_audit_file(tmp_path):
    H = KPartiteHypergraph.complete((2, 2, 2))
    partition = LayeredPartition([PartPartition.trivial(2, i) for i in range(3)])
    report = homogeneity_audit(H, partition, 0.1)
    formats.write_audit(tmp_path / "a.audit", report)
    data = formats.read_audit(tmp_path / "a.audit")
    assert data["passed"] and data["mass"] == 0 and data["eps"] == 0.1
    assert data["records"] == [((1, 1, 1), 1.0, True)]


def test_links_file(tmp_path):
    instance = generate(InstanceSpec("planted-boxes", n=5, k=4, r=2, seed=3))
    path = tmp_path / "i.links"
    formats.write_links(path, instance.H, instance.oracle)
    oracle = formats.read_links(path)
    assert oracle.r == 2 and oracle.provenance == "planted"
    pins = [(0, 4), (2, 1)]
    assert oracle.partition(pins, 3) == instance.oracle.partition(pins, 3)


@pytest.mark.parametrize(
    "text, offset",
    [
        ("khg 3 2 2 2\n0 0 9\n", 12),
        ("khg 3 2 2 2\n# comment\n0 1\n", 22),
        ("graph 3 2 2 2\n", 0),
        ("khg 3 2 2\n", 0),
        ("khg 3 2 2 2\n0 x 1\n", 12),
    ],
)
def test_malformed_khg_reports_byte_offset(tmp_path, text, offset):
    path = tmp_path / "bad.khg"
    path.write_text(text)
    with pytest.raises(FormatError) as info:
        formats.read_khg(path)
    assert info.value.offset == offset


def test_manifest_digest_ignores_timing(tmp_path):
    a = RunManifest("gen", {"n": np.int64(60)}, seed=1)
    b = RunManifest("gen", {"n": 60}, seed=1)
    b.finish()
    assert a.digest == b.digest
    assert a.digest != RunManifest("gen", {"n": 61}, seed=1).digest

    path = tmp_path / "m.yaml"
    b.to_yaml(path)
    assert RunManifest.from_yaml(path).digest == b.digest
    data = yaml.safe_load(path.read_text())
    data["seed"] = 2
    path.write_text(yaml.safe_dump(data))
    with pytest.raises(FormatError):
        RunManifest.from_yaml(path)


def test_cli_gen_homogenize_audit(tmp_path):
    prefix = str(tmp_path / "inst")
    assert main(["gen", "--family", "planted-boxes", "--n", "30", "--seed", "4", "--out", prefix, "-q"]) == OK
    assert main(["homogenize", f"{prefix}.khg", "--links", f"{prefix}.links", "--eps", "0.2", "-q"]) == OK
    for suffix in ("part", "audit", "result.yaml", "manifest.yaml"):
        assert (tmp_path / f"inst.{suffix}").exists()
    assert formats.read_audit(f"{prefix}.audit")["passed"]
    result = yaml.safe_load((tmp_path / "inst.result.yaml").read_text())
    assert result["within_budget"]
    assert main(["audit", f"{prefix}.khg", f"{prefix}.part", "--eps", "0.2", "-q"]) == OK
    manifest = RunManifest.from_yaml(tmp_path / "inst.manifest.yaml")
    assert manifest.command == "audit"


def test_cli_audit_failure_status(tmp_path):
    H = KPartiteHypergraph(random_cells(2, (6, 6, 6)))
    formats.write_khg(tmp_path / "r.khg", H)
    partition = LayeredPartition([PartPartition.trivial(6, i) for i in range(3)])
    formats.write_part(tmp_path / "r.part", partition)
    assert main(["audit", str(tmp_path / "r.khg"), str(tmp_path / "r.part"), "--eps", "0.1", "-q"]) == FAILED


def test_cli_gen_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["gen", "--family", "product", "--n", "12", "--seed", "7", "--out", str(tmp_path / name), "-q"]) == OK
    assert (tmp_path / "a.khg").read_bytes() == (tmp_path / "b.khg").read_bytes()
    assert (tmp_path / "a.links").read_bytes() == (tmp_path / "b.links").read_bytes()


def test_cli_usage_errors(tmp_path):
    assert main(["gen", "--family", "spiral"]) == USAGE
    assert main(["gen", "--family", "product", "--k", "2", "--out", str(tmp_path / "x"), "-q"]) == USAGE
    bad = tmp_path / "bad.khg"
    bad.write_text("khg 3 2 2 2\n0 0 9\n")
    assert main(["vc", str(bad), "-q"]) == USAGE
    assert main(["vc", str(tmp_path / "missing.khg"), "-q"]) == USAGE


def test_cli_vc(tmp_path, capsys):
    formats.write_khg(tmp_path / "e.khg", KPartiteHypergraph(np.repeat(np.eye(4, dtype=bool)[:, :, None], 2, axis=2)))
    assert main(["vc", str(tmp_path / "e.khg"), "-q"]) == OK
    assert capsys.readouterr().out.strip() == "1"
    assert yaml.safe_load((tmp_path / "e.vc.yaml").read_text())["slicewise_vc"] == 1


def test_cli_gowers_pipeline(tmp_path):
    prefix = str(tmp_path / "toy")
    assert main(["gowers", "build", "--toy", "--t", "3", "--n", "24", "--eps", "0.05", "--seed", "1",
                 "--out", prefix, "-q"]) == OK
    construction = load_construction(f"{prefix}.gowers.yaml")
    assert construction.params.m == (1, 2, 4, 8)
    assert np.array_equal(formats.read_w3g(f"{prefix}.w3g").weights, construction.weights.weights)

    assert main(["gowers", "links", f"{prefix}.gowers.yaml", "-q"]) == OK
    links = yaml.safe_load((tmp_path / "toy.links.yaml").read_text())
    assert links["certificates"] == 72 and links["failures"] == 0

    assert main(["gowers", "cascade", f"{prefix}.gowers.yaml", "--eps", "0.05", "-q"]) == OK
    cascade = yaml.safe_load((tmp_path / "toy.cascade.yaml").read_text())
    assert cascade["levels"][0]["witnesses"]

    assert main(["gowers", "build", "--n", "24", "--eps", "0.05", "--out", prefix, "-q"]) == USAGE


def test_every_artifact_carries_its_manifest_digest(tmp_path):
    inst, rand, toy = (str(tmp_path / name) for name in ("inst", "rand", "toy"))
    assert main(["gen", "--family", "planted-boxes", "--n", "30", "--seed", "1", "--out", inst, "-q"]) == OK
    assert main(["homogenize", f"{inst}.khg", "--links", f"{inst}.links", "--eps", "0.2", "-q"]) == OK
    assert main(["vc", f"{inst}.khg", "-q"]) == OK

    assert main(["gen", "--family", "uniform-random", "--n", "30", "--seed", "2", "--out", rand, "-q"]) == OK
    assert main(["homogenize", f"{rand}.khg", "--max-anchors", "1", "--eps", "0.2", "-q"]) == FAILED
    assert (tmp_path / "rand.coverage.yaml").exists()

    assert main(["gowers", "build", "--toy", "--t", "3", "--n", "24", "--eps", "0.05", "--out", toy, "-q"]) == OK
    assert main(["gowers", "links", f"{toy}.gowers.yaml", "-q"]) == OK
    main(["gowers", "sample", f"{toy}.gowers.yaml", "-q"])
    assert main(["gowers", "cascade", f"{toy}.gowers.yaml", "--eps", "0.05", "-q"]) == OK
    assert main(["bench", "--only", "similarity", "--seeds", "1", "--out", str(tmp_path / "bench"), "-q"]) == OK

    files = sorted(tmp_path.iterdir())
    assert not [f for f in files if f.name.endswith(".tmp")]
    for path in files:
        assert formats.manifest_digest(path), path.name
    for name in ("toy.concentration.yaml", "toy.cascade.yaml", "bench.yaml", "inst.result.yaml"):
        assert yaml.safe_load((tmp_path / name).read_text())
    manifest = RunManifest.from_yaml(tmp_path / "bench.manifest.yaml")
    assert formats.manifest_digest(tmp_path / "bench.yaml") == manifest.digest
