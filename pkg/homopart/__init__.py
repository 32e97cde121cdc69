__version__ = "0.1"

from .auditor import (
    HomogeneityReport,
    RegularityWitness,
    disagreement_pairs,
    general_homogeneity_audit,
    homogeneity_audit,
    slicewise_vc,
    vc_dimension,
    weak_regularity_witness,
)
from .config import Settings, get_settings, load_config
from .errors import HomopartError
from .gowers import (
    build_sequence,
    build_weighted,
    item2_margin,
    link_certificate,
    orthogonal_family,
    quasirandomness_audit,
    refinement_cascade,
    sample_unweighted,
)
from .homogenizer import (
    ToleranceParams,
    homogeneous_partition,
    similarity_partition,
    tuple_partition,
    twin_diagnostics,
)
from .hypercore import (
    BipartiteGraph,
    KPartiteHypergraph,
    VertexSet,
    WeightedBipartite,
    WeightedTripartite,
    density,
    partite_cover,
)
from .oracles import ExhaustiveOracle, GreedyOracle, PlantedOracle, TableOracle
from .partitions import LayeredPartition, PartPartition, beta_refines, common_refinement, equalize
