"""Diffusion Transport Alignment."""
from .alignment import (
    Embedding,
    JointAffinity,
    barycentric_project,
    cross_similarity,
    joint_affinity,
    joint_embedding,
    laplacian_eigenmaps,
)
from .diffusion_bridge import (
    BridgeBlocks,
    CorrespondenceSet,
    bridge_cost,
    cross_operator,
    extract_blocks,
    inter_domain_cost,
    label_augment,
)
from .errors import *  # noqa: F401,F403
from .kernel_graph import (
    DiffusionOperator,
    DomainData,
    KernelConfig,
    alpha_decay_kernel,
    diffuse,
    diffusion_operator,
    knn_bandwidths,
    row_normalize,
)
from .pipeline import AlignmentResult, align, compute_cost
from .transport import (
    MassSelection,
    TransportPlan,
    TransportSpec,
    hard_assignment,
    round_assignment,
    hard_assignment_spec,
    minmax_normalize,
    ntc,
    select_mass,
    solve,
    solve_entropic,
    solve_partial_ot,
)

__version__ = "0.1.0"
