"""Exception hierarchy shared by all netfunnel modules."""


class NetFunnelError(Exception):
    """Base class for every error raised by this package."""


# graph ---------------------------------------------------------------------

class DisconnectedGraph(NetFunnelError):
    pass


class LoopDetected(NetFunnelError):
    pass


class EmptyEdgeSet(NetFunnelError):
    pass


class DimensionMismatch(NetFunnelError, ValueError):
    pass


# funnel --------------------------------------------------------------------

class EvaluatedBeforeActivation(NetFunnelError):
    pass


class RatioOutOfFunnel(NetFunnelError):
    def __init__(self, ratio, edge=None, component=None):
        self.ratio = ratio
        self.edge = edge
        self.component = component
        where = ""
        if edge is not None:
            where = f" on edge {edge[0]}-{edge[1]}"
            if component is not None:
                where += f" component {component + 1}"
        super().__init__(f"ratio {ratio!r} outside (-1, 1){where}")


# exprlang ------------------------------------------------------------------

class ParseError(NetFunnelError):
    def __init__(self, position: int, message: str):
        self.position = position
        self.message = message
        super().__init__(f"{message} at offset {position}")


class UnboundVariable(NetFunnelError):
    pass


class NonFiniteResult(NetFunnelError):
    def __init__(self, subexpr: str, value=None):
        self.subexpr = subexpr
        self.value = value
        super().__init__(f"non-finite result ({value!r}) in subexpression {subexpr!r}")


# dynamics ------------------------------------------------------------------

class SingularGain(NetFunnelError):
    pass


class DisconnectedComponent(NetFunnelError):
    pass


class HeterogeneousInternalDynamics(NetFunnelError):
    pass


# sim -----------------------------------------------------------------------

class InitialConditionOutsideFunnel(NetFunnelError):
    pass


class FunnelBreach(NetFunnelError):
    def __init__(self, t, edge, component, ratio=None):
        self.t = t
        self.edge = edge
        self.component = component
        self.ratio = ratio
        super().__init__(
            f"funnel breach at t={t!r} on edge {edge} component {component + 1} "
            f"(ratio {ratio!r})"
        )


class FiniteEscapeSuspected(NetFunnelError):
    def __init__(self, t, norm=None):
        self.t = t
        self.norm = norm
        super().__init__(f"state norm {norm!r} exceeded blow-up threshold at t={t!r}")


class StepUnderflow(NetFunnelError):
    def __init__(self, t, dt):
        self.t = float(t)
        self.dt = float(dt)
        super().__init__(f"step size {self.dt!r} fell below dt_min at t={self.t!r}")


class UnknownNode(NetFunnelError):
    pass


class DuplicateJoin(NetFunnelError):
    pass


# analysis ------------------------------------------------------------------

class SchemaMismatch(NetFunnelError):
    pass


class ConventionMismatch(NetFunnelError):
    pass


class NonMonotoneInput(NetFunnelError):
    pass


class HypothesisViolated(NetFunnelError):
    pass


# scenario files ------------------------------------------------------------

class ScenarioError(NetFunnelError):
    """Schema problem in a scenario file; carries the key path and source line."""

    def __init__(self, path: str, message: str, line=None, source=None):
        self.path = path
        self.line = line
        self.source = source
        self.message = message
        loc = f"{path}:{line}" if line is not None else path
        super().__init__(f"{loc}: {message}")
