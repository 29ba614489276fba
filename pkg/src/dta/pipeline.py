"""End-to-end Diffusion Transport Alignment."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np

from . import alignment, diffusion_bridge, kernel_graph, transport
from .diffusion_bridge import CorrespondenceSet
from .errors import BadLabels
from .kernel_graph import DiffusionOperator, DomainData, KernelConfig


@dataclass
class AlignmentResult:
    config: KernelConfig
    W1: np.ndarray
    W2: np.ndarray
    Pt1: DiffusionOperator
    Pt2: DiffusionOperator
    cost: np.ndarray
    plan: transport.TransportPlan
    mass_selection: Optional[transport.MassSelection] = None
    label_augmented: bool = False
    info: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.cost.shape[0]

    @property
    def m(self) -> int:
        return self.cost.shape[1]

    def normalized_plan(self) -> transport.TransportPlan:
        return transport.minmax_normalize(self.plan)

    def pairs(self) -> List[Tuple[int, int]]:
        """Hard assignment of a vertex plan, or the heaviest matching of an entropic one."""
        if self.plan.info.get("method", "").startswith("sinkhorn"):
            return transport.round_assignment(self.plan)
        return transport.hard_assignment(self.plan)

    def project(self, target: DomainData):
        return alignment.barycentric_project(self.normalized_plan(), target)

    def embed(self, d: int = 2, variant: str = "random-walk") -> alignment.Embedding:
        T = self.normalized_plan()
        W12 = alignment.cross_similarity(self.W1, self.W2, T)
        W = alignment.joint_affinity(self.W1, self.W2, W12, self.config.mu)
        return alignment.joint_embedding(W, d, variant)


def compute_cost(
    domain1: DomainData,
    domain2: DomainData,
    corr: CorrespondenceSet,
    cfg: KernelConfig = KernelConfig(),
    use_labels: bool = False,
):
    """Kernels, powered operators and the (optionally label-augmented) cost matrix."""
    W1, _, Pt1 = kernel_graph.diffusion_operator(domain1, cfg)
    W2, _, Pt2 = kernel_graph.diffusion_operator(domain2, cfg)
    D, _, _ = diffusion_bridge.bridge_cost(Pt1, Pt2, corr)
    if use_labels:
        if domain1.labels is None or domain2.labels is None:
            raise BadLabels("label-augmented cost needs labels in both domains")
        D = diffusion_bridge.label_augment(D, domain1.labels, domain2.labels)
    return W1, W2, Pt1, Pt2, D


def align(
    domain1: DomainData,
    domain2: DomainData,
    corr: CorrespondenceSet,
    cfg: KernelConfig = KernelConfig(),
    mass: Union[None, float, str] = None,
    mode: str = "exact",
    epsilon: Optional[float] = None,
    use_labels: bool = False,
    mass_grid=None,
) -> AlignmentResult:
    """Align two domains given a few known correspondences.

    Parameters
    ----------
    mass
        Total transported mass under uniform ``1/n`` caps.  ``None`` moves as
        much as possible (``min(n, m) / n``, a full hard assignment when
        ``n <= m``); ``"auto"`` picks the knee of the NTC curve; a float is
        used as given.
    mode
        ``"exact"`` (LP vertex solution) or ``"entropic"``.
    """
    W1, W2, Pt1, Pt2, D = compute_cost(domain1, domain2, corr, cfg, use_labels)
    n, m = D.shape
    base = transport.hard_assignment_spec(n, m)
    selection = None
    if isinstance(mass, str):
        if mass != "auto":
            raise ValueError(f"mass must be a number, None or 'auto', got {mass!r}")
        selection = transport.select_mass(D, base.v, base.q, mass_grid, mode, epsilon)
        plan = selection.plan
    else:
        M = base.M if mass is None else float(mass)
        spec = transport.TransportSpec(base.v, base.q, M, epsilon)
        plan = transport.solve(D, spec, mode)
    return AlignmentResult(
        cfg, W1, W2, Pt1, Pt2, D, plan, selection, use_labels,
        info={"n": n, "m": m, "n_correspondences": len(corr), "mode": mode},
    )
