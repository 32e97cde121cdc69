"""
Command-line interface.

    homopart gen --family product --n 60 --seed 7 --out inst
    homopart homogenize inst.khg --links inst.links --eps 0.2 --out inst
    homopart audit inst.khg inst.part --eps 0.2
    homopart vc inst.khg
    homopart gowers build --toy --t 3 --n 120 --seed 1 --out toy
    homopart gowers links toy.gowers.yaml
    homopart gowers sample toy.gowers.yaml --seed 2
    homopart gowers cascade toy.gowers.yaml --eps 0.05
    homopart bench --seeds 3

Exit status: 0 on success, 1 when an audit or verification fails, 2 on usage
or input errors.
"""

import argparse
import logging
import sys

import yaml

from .. import auditor, gowers, homogenizer
from ..config import get_settings
from ..errors import CoverageError, HomopartError, VerificationError
from ..oracles import ExhaustiveOracle, GreedyOracle
from ..partitions import LayeredPartition, PartPartition
from . import bench, formats
from .generate import FAMILIES, InstanceSpec, generate
from .manifest import RunManifest, array_digest

log = logging.getLogger(__name__)

OK, FAILED, USAGE = 0, 1, 2


def _common():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="Run seed.")
    common.add_argument("--mode", choices=("paper", "practical", "toy"), default=None, help="Parameter mode.")
    common.add_argument("--eps", type=float, default=0.2, help="Target eps.")
    common.add_argument("--delta", type=float, default=None, help="Link regularity delta (gowers).")
    common.add_argument("--out", default=None, help="Output prefix.")
    common.add_argument("--threads", type=int, default=None, help="Worker threads.")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging.")
    common.add_argument("-q", "--quiet", action="store_true", help="Warnings only.")
    return common


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="homopart", description="Homogeneous partitions of k-partite hypergraphs.")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen", parents=[common], help="Generate an instance.")
    gen.add_argument("--family", choices=FAMILIES, default="planted-boxes")
    gen.add_argument("--n", type=int, default=60)
    gen.add_argument("--k", type=int, default=3)
    gen.add_argument("--r", type=int, default=3)
    gen.add_argument("--density", type=float, default=0.5)
    gen.set_defaults(handler=run_gen)

    hom = commands.add_parser("homogenize", parents=[common], help="Homogeneous partition of a .khg file.")
    hom.add_argument("input")
    hom.add_argument("--links", help="Oracle sidecar (.links).")
    hom.add_argument("--oracle", choices=("greedy", "exhaustive"), default="greedy",
                     help="Computed oracle used without --links.")
    hom.add_argument("--r", type=int, default=3)
    hom.add_argument("--block-size", type=int, default=None)
    hom.add_argument("--max-anchors", type=int, default=None)
    hom.set_defaults(handler=run_homogenize)

    audit = commands.add_parser("audit", parents=[common], help="Audit a partition.")
    audit.add_argument("input", help=".khg or .w3g file.")
    audit.add_argument("partition", help=".part file.")
    audit.add_argument("--general", action="store_true", help="Apply part 0's partition to every part.")
    audit.set_defaults(handler=run_audit)

    vc = commands.add_parser("vc", parents=[common], help="Slicewise VC-dimension.")
    vc.add_argument("input")
    vc.add_argument("--cap", type=int, default=None)
    vc.set_defaults(handler=run_vc)

    gw = commands.add_parser("gowers", help="Lower-bound construction.")
    gw_commands = gw.add_subparsers(dest="action", required=True)
    build = gw_commands.add_parser("build", parents=[common])
    build.add_argument("--toy", action="store_true", help="Toy mode.")
    build.add_argument("--t", type=int, default=None)
    build.add_argument("--n", type=int, required=True)
    build.add_argument("--s0", type=int, default=None)
    build.set_defaults(handler=run_gowers_build)
    for name, handler in (("links", run_gowers_links), ("sample", run_gowers_sample), ("cascade", run_gowers_cascade)):
        sub = gw_commands.add_parser(name, parents=[common])
        sub.add_argument("construction", help="Metadata written by 'gowers build'.")
        sub.set_defaults(handler=handler)
        if name == "cascade":
            sub.add_argument("--partition", help="Candidate .part file (default: trivial).")
        if name == "links":
            sub.add_argument("--budget", type=int, default=None)

    b = commands.add_parser("bench", parents=[common], help="Run the experiment harness.")
    b.add_argument("--seeds", type=int, default=3)
    b.add_argument("--only", nargs="*", choices=sorted(bench.EXPERIMENTS), default=None)
    b.set_defaults(handler=run_bench)
    return parser


def _prefix(args, default):
    return args.out or default


def _emit(manifest, prefix, outputs):
    for path in outputs:
        manifest.add_output(path)
    manifest.finish().to_yaml(f"{prefix}.manifest.yaml")


def run_gen(args):
    spec = InstanceSpec(args.family, n=args.n, k=args.k, r=args.r, seed=args.seed, density=args.density)
    manifest = RunManifest("gen", spec.to_dict(), seed=args.seed)
    instance = generate(spec)
    prefix = _prefix(args, "instance")
    outputs = [f"{prefix}.khg"]
    formats.write_khg(outputs[0], instance.H, manifest.digest)
    if instance.oracle is not None:
        outputs.append(f"{prefix}.links")
        formats.write_links(outputs[1], instance.H, instance.oracle, manifest.digest)
    _emit(manifest, prefix, outputs)
    return OK


def run_homogenize(args):
    mode = args.mode or "practical"
    H = formats.read_khg(args.input)
    parameters = {"eps": args.eps, "oracle": args.links or args.oracle, "r": args.r,
                  "block_size": args.block_size, "max_anchors": args.max_anchors}
    manifest = RunManifest("homogenize", parameters, mode=mode, seed=args.seed)
    manifest.add_input(args.input)
    if args.links:
        oracle = formats.read_links(args.links)
        manifest.add_input(args.links)
    else:
        inner = homogenizer.ToleranceParams(args.eps ** 2 / (8 * H.k), H.k, args.r, mode)
        cls = GreedyOracle if args.oracle == "greedy" else ExhaustiveOracle
        oracle = cls(H, args.r, float(inner.eps_prime))
    prefix = _prefix(args, args.input.rsplit(".", 1)[0])
    try:
        result = homogenizer.homogeneous_partition(
            H, oracle, args.eps, seed=args.seed, mode=mode, block_size=args.block_size,
            max_anchors=args.max_anchors, threads=args.threads,
        )
    except CoverageError as e:
        log.error("%s", e)
        report = {"error": "coverage", "uncovered": int(e.uncovered), "budget": float(e.budget),
                  "anchors": int(e.anchors), "target": e.target}
        formats.write_yaml(f"{prefix}.coverage.yaml", report, manifest.digest)
        _emit(manifest, prefix, [f"{prefix}.coverage.yaml"])
        return FAILED
    report = result.audit(H)
    outputs = [f"{prefix}.part", f"{prefix}.audit", f"{prefix}.result.yaml"]
    formats.write_part(outputs[0], result.partition, manifest.digest)
    formats.write_audit(outputs[1], report, digest=manifest.digest)
    data = result.to_dict()
    data["audit"] = report.to_dict()
    data["disagreement"] = result.disagreement_report(H)
    formats.write_yaml(outputs[2], data, manifest.digest)
    _emit(manifest, prefix, outputs)
    log.info("Audit %s with normalized mass %.4g", "passed" if report.passed else "failed", report.normalized_mass)
    return OK if report.passed else FAILED


def _read_box(path):
    return formats.read_w3g(path) if path.endswith(".w3g") else formats.read_khg(path)


def run_audit(args):
    box = _read_box(args.input)
    partition = formats.read_part(args.partition)
    manifest = RunManifest("audit", {"eps": args.eps, "general": args.general}, seed=args.seed)
    manifest.add_input(args.input)
    manifest.add_input(args.partition)
    if args.general:
        report = auditor.general_homogeneity_audit(box, partition[0], args.eps)
    else:
        report = auditor.homogeneity_audit(box, partition, args.eps)
    prefix = _prefix(args, args.partition.rsplit(".", 1)[0])
    formats.write_audit(f"{prefix}.audit", report, "general" if args.general else "homogeneity", manifest.digest)
    _emit(manifest, prefix, [f"{prefix}.audit"])
    return OK if report.passed else FAILED


def run_vc(args):
    H = formats.read_khg(args.input)
    cap = get_settings().vc_cap if args.cap is None else args.cap
    manifest = RunManifest("vc", {"cap": cap}, seed=args.seed)
    manifest.add_input(args.input)
    d = auditor.slicewise_vc(H, cap, args.threads)
    prefix = _prefix(args, args.input.rsplit(".", 1)[0])
    formats.write_yaml(f"{prefix}.vc.yaml", {"slicewise_vc": int(d), "cap": cap, "at_cap": bool(d >= cap)}, manifest.digest)
    _emit(manifest, prefix, [f"{prefix}.vc.yaml"])
    print(d)
    return OK


def _gowers_params(data):
    kwargs = {"mode": data["mode"], "seed": data["seed"]}
    if data["mode"] == "toy":
        kwargs["t"] = data["t"]
        kwargs["s0"] = data["s0"]
    return gowers.build_sequence(data["eps"], data["delta"], **kwargs)


def run_gowers_build(args):
    mode = "toy" if args.toy or args.mode == "toy" else "paper"
    delta = args.eps if args.delta is None else args.delta
    params = gowers.build_sequence(args.eps, delta, mode=mode, t=args.t, s0=args.s0, seed=args.seed)
    construction = gowers.build_weighted(params, args.n)
    manifest = RunManifest("gowers build", {"eps": args.eps, "delta": delta, "t": args.t, "n": args.n,
                                            "s0": args.s0}, mode=mode, seed=args.seed)
    prefix = _prefix(args, "gowers")
    metadata = construction.metadata()
    metadata["weights_sha256"] = array_digest(construction.weights.weights)
    outputs = [f"{prefix}.w3g", f"{prefix}.gowers.yaml"]
    formats.write_w3g(outputs[0], construction.weights, manifest.digest)
    formats.write_yaml(outputs[1], metadata, manifest.digest)
    _emit(manifest, prefix, outputs)
    if not gowers.weight_support_ok(construction):
        raise VerificationError("Cell weights fall outside {0, 2^-r}.")
    return OK


def load_construction(path):
    """Rebuild a construction from its metadata and check it against the recorded weights."""
    with open(path) as f:
        metadata = yaml.safe_load(f)
    params = _gowers_params(metadata["params"])
    construction = gowers.build_weighted(params, metadata["layering"]["n"])
    recorded = metadata.get("weights_sha256")
    if recorded and recorded != array_digest(construction.weights.weights):
        raise VerificationError(f"Rebuilt weights do not match {path}.")
    return construction


def _sibling(args, suffix):
    base = args.construction
    if base.endswith(".gowers.yaml"):
        base = base[: -len(".gowers.yaml")]
    return f"{_prefix(args, base)}.{suffix}"


def run_gowers_links(args):
    construction = load_construction(args.construction)
    manifest = RunManifest("gowers links", {"construction": args.construction, "budget": args.budget},
                           seed=args.seed)
    certificates = gowers.link_certificates(construction, budget=args.budget, seed=args.seed)
    failures = [c for c in certificates if c.verified is False]
    kinds = {}
    for c in certificates:
        kinds[c.kind] = kinds.get(c.kind, 0) + 1
    report = {"certificates": len(certificates), "kinds": kinds, "failures": len(failures),
              "items": [c.to_dict() for c in certificates]}
    out = _sibling(args, "links.yaml")
    formats.write_yaml(out, report, manifest.digest)
    _emit(manifest, out[: -len(".links.yaml")], [out])
    log.info("%d certificates, %d failed", len(certificates), len(failures))
    return FAILED if failures else OK


def run_gowers_sample(args):
    construction = load_construction(args.construction)
    manifest = RunManifest("gowers sample", {"construction": args.construction}, seed=args.seed)
    H, report = gowers.sample_unweighted(construction.weights, seed=args.seed)
    khg, yml = _sibling(args, "sample.khg"), _sibling(args, "concentration.yaml")
    formats.write_khg(khg, H, manifest.digest)
    report.to_yaml(yml, manifest.digest)
    _emit(manifest, khg[: -len(".sample.khg")], [khg, yml])
    if report.box_fraction < 0.97:
        log.warning("Only %.0f%% of boxes within %g sigma", 100 * report.box_fraction, report.sigmas)
        return FAILED
    return OK


def run_gowers_cascade(args):
    construction = load_construction(args.construction)
    manifest = RunManifest("gowers cascade", {"construction": args.construction, "eps": args.eps,
                                              "partition": args.partition}, seed=args.seed)
    if args.partition:
        candidate = formats.read_part(args.partition)
        manifest.add_input(args.partition)
    else:
        candidate = LayeredPartition([PartPartition.trivial(construction.n, p) for p in range(3)])
    report = gowers.refinement_cascade(construction, candidate, args.eps)
    out = _sibling(args, "cascade.yaml")
    report.to_yaml(out, manifest.digest)
    _emit(manifest, out[: -len(".cascade.yaml")], [out])
    unverified = [w for w in report.witnesses if w.regularity.found and not w.regularity_verified]
    return FAILED if unverified else OK


def run_bench(args):
    manifest = RunManifest("bench", {"seeds": args.seeds, "only": args.only}, seed=args.seed)
    results = bench.run(args.only, range(args.seed, args.seed + args.seeds), threads=args.threads)
    prefix = _prefix(args, "bench")
    formats.write_yaml(f"{prefix}.yaml", results, manifest.digest)
    _emit(manifest, prefix, [f"{prefix}.yaml"])
    return OK if all(r["passed"] for r in results.values()) else FAILED


def _configure_logging(args):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else USAGE
    _configure_logging(args)
    try:
        return args.handler(args)
    except VerificationError as e:
        log.error("Verification failed: %s", e)
        return FAILED
    except (HomopartError, ValueError, OSError) as e:
        log.error("%s", e)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
