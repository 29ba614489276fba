"""Exception and warning types raised across the package."""


class DTAError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateBandwidth(DTAError):
    def __init__(self, indices):
        self.indices = [int(i) for i in indices]
        super().__init__(
            f"k-NN bandwidth is zero for observation(s) {self.indices[:10]}"
            f"{' ...' if len(self.indices) > 10 else ''}; deduplicate the data or lower k"
        )


class BadCorrespondence(DTAError):
    pass


class UnreachablePoint(DTAError):
    def __init__(self, indices, domain="domain1"):
        self.indices = [int(i) for i in indices]
        self.domain = domain
        shown = self.indices[:20]
        more = " ..." if len(self.indices) > 20 else ""
        super().__init__(
            f"{len(self.indices)} point(s) of {domain} cannot reach any correspondence "
            f"within t steps: {shown}{more}; increase --t or --k"
        )


class BadLabels(DTAError):
    pass


class BadShapes(DTAError):
    pass


class InfeasibleMass(DTAError):
    pass


class SolverFailure(DTAError):
    pass


class NotAVertexSolution(DTAError):
    pass


class ConstantPlan(DTAError):
    pass


class DisconnectedGraph(DTAError):
    def __init__(self, labels):
        self.labels = labels
        self.n_components = int(labels.max()) + 1 if len(labels) else 0
        sizes = [int((labels == c).sum()) for c in range(self.n_components)]
        super().__init__(
            f"joint affinity graph has {self.n_components} connected components "
            f"(sizes {sizes[:10]})"
        )


class BadFile(DTAError):
    pass


class NoSharedMass(DTAError):
    pass


class FlatCurveWarning(UserWarning):
    """The NTC curve has no detectable knee; the largest mass was selected."""


class DegenerateVariableWarning(UserWarning):
    """A variable passed to the MI estimator is constant."""
