"""Exception hierarchy shared by all modules."""


class PdpError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PdpError):
    """A raw model description violates one or more structural constraints.

    ``issues`` lists every violation found, not only the first one.
    """

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))

    def kinds(self):
        return {i.kind for i in self.issues}


class EmptyTargets(PdpError):
    pass


class ZeroObservationProbability(PdpError):
    pass


class EmptyResult(PdpError):
    """Cutting removed every entry of a sub-belief."""


class NotNormalized(PdpError):
    pass


class NotPosteriorDeterministic(PdpError):
    def __init__(self, witness):
        self.witness = witness
        super().__init__(f"model is not posterior-deterministic: {witness}")


class NodeBudgetExceeded(PdpError):
    """A resource cap was hit.

    ``partial`` optionally carries the best result computed before giving up.
    """

    def __init__(self, message, partial=None):
        self.partial = partial
        super().__init__(message)


class EmptyDomain(PdpError):
    pass


class DisjointDomains(PdpError):
    pass


class NotInAnySec(PdpError):
    pass


class NoExit(PdpError):
    pass


class NotFinite(PdpError):
    pass


class ModelSyntaxError(PdpError):
    def __init__(self, message, line, column=1):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class ModelSemanticError(PdpError):
    def __init__(self, message, cause=None):
        self.cause = cause
        super().__init__(message)
