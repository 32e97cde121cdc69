"""Seeded experiment harness: the end-to-end checks, timed, over a seed range."""

import logging
import time

import numpy as np

from .. import gowers
from ..homogenizer import ToleranceParams, homogeneous_partition, similarity_partition, tuple_partition
from ..hypercore import BipartiteGraph
from ..partitions import LayeredPartition, PartPartition
from ..seeding import derive_rng
from .generate import InstanceSpec, generate

log = logging.getLogger(__name__)


def similarity(seed, threads=None):
    runs = []
    for gamma in (0.1, 0.2, 0.3):
        r = 2 + seed % 3
        instance = generate(InstanceSpec("planted-boxes", n=120, k=2, r=r, seed=seed))
        graph = BipartiteGraph(instance.H.cells)
        given = [PartPartition(l, part=i) for i, l in enumerate(instance.labels)]
        result = similarity_partition(graph, given[0], given[1], gamma, r, seed=seed)
        runs.append({"gamma": gamma, "r": r, "ok": bool(result.contract_holds)})
    return runs


def tuples(seed, threads=None):
    runs = []
    for family in ("product", "planted-boxes"):
        instance = generate(InstanceSpec(family, n=60, k=3, r=3, seed=seed))
        params = ToleranceParams(0.2, 3, 3)
        result = tuple_partition(instance.H, instance.oracle, params, seed=seed, threads=threads)
        diameter = max(result.class_diameters(instance.H), default=0)
        ok = result.exceptional_size <= 0.2 * 60 ** 2 and diameter <= 0.2 * 60
        runs.append({"family": family, "classes": result.class_count, "diameter": diameter, "ok": bool(ok)})
    return runs


def homogenize(seed, threads=None):
    n = (60, 120)[seed % 2]
    instance = generate(InstanceSpec("planted-boxes", n=n, k=3, r=3, seed=seed))
    result = homogeneous_partition(instance.H, instance.oracle, 0.2, seed=seed, threads=threads)
    report = result.audit(instance.H)
    return [{"n": n, "mass": report.normalized_mass, "ok": bool(report.passed and result.within_budget)}]


def families(seed, threads=None):
    family = gowers.orthogonal_family(128, 1500, seed=seed)
    lam = derive_rng(seed, "lambda").dirichlet(np.ones(family.M))
    margin = gowers.item2_margin(family, lam, eps=0.02, zeta=0.5, eta=0.1)
    ok = family.statistics.item1_ok and family.event_ok and margin.count >= margin.required
    return [{"attempts": family.attempts, "margin": margin.count, "ok": bool(ok)}]


def _toy(seed):
    params = gowers.build_sequence(0.05, 0.05, mode="toy", t=3, seed=seed)
    return gowers.build_weighted(params, 120)


def sampling(seed, threads=None):
    construction = _toy(seed)
    _, report = gowers.sample_unweighted(construction.weights, seed=seed)
    return [{"box_fraction": report.box_fraction, "ok": bool(report.box_fraction >= 0.97)}]


def cascade(seed, threads=None):
    construction = _toy(seed)
    candidate = LayeredPartition([PartPartition.trivial(construction.n, p) for p in range(3)])
    report = gowers.refinement_cascade(construction, candidate, 0.05)
    gaps = [w.gap for w in report.witnesses if w.regularity_verified]
    ok = bool(gaps) and max(gaps) >= 2.0 ** -construction.params.t
    return [{"witnesses": len(report.witnesses), "max_gap": max(gaps, default=0.0), "ok": bool(ok)}]


EXPERIMENTS = {
    "similarity": similarity,
    "tuples": tuples,
    "homogenize": homogenize,
    "families": families,
    "sampling": sampling,
    "cascade": cascade,
}


def run(names=None, seeds=range(3), threads=None):
    """
    Run experiments over a seed range.

    Returns:
        dict: Per experiment, the runs per seed, total seconds and whether every run passed.
    """
    results = {}
    for name in names or EXPERIMENTS:
        start = time.perf_counter()
        runs = {int(seed): EXPERIMENTS[name](int(seed), threads) for seed in seeds}
        passed = all(run["ok"] for per_seed in runs.values() for run in per_seed)
        results[name] = {"passed": passed, "seconds": round(time.perf_counter() - start, 3), "runs": runs}
        log.info("%s: %s in %.2fs", name, "passed" if passed else "FAILED", results[name]["seconds"])
    return results
