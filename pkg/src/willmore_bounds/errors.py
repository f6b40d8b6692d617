"""Exception hierarchy shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ToolkitError):
    """Invalid run configuration."""


class ParseError(ToolkitError):
    """Malformed input file."""


# geometry
class DegenerateElement(ToolkitError):
    """Mesh element with (near-)singular pullback metric."""


class DerivativeUnavailable(ToolkitError):
    """A metric derivative order required by an operation is missing."""


class NonSPDMetric(ToolkitError):
    """Metric evaluation produced a non-SPD matrix."""


class ViolationFound(ToolkitError):
    """A pointwise inequality was violated beyond tolerance."""


class BoundaryTooRough(ToolkitError):
    """Test curve touches the mesh boundary non-smoothly."""


class HomotopyClassAmbiguous(ToolkitError):
    """Test curve crosses another hole; enclosed curvature ill-defined."""


# framed loops
class SamplingTooCoarse(ToolkitError):
    """Consecutive trihedron rotation exceeds pi/2; lift ill-defined."""


class NotTangent(ToolkitError):
    """Vector handed to parallel transport is not normal-orthogonal."""


# sphere maps
class DegenerateConfiguration(ToolkitError):
    """Geodesic test arc is tangent to the curve; caller should jitter."""


class NotRegularValue(ToolkitError):
    """Query point too close to the image of an element boundary."""


# floating potential
class SingularSystem(ToolkitError):
    """Stiffness system is singular or the solver failed to converge."""


class InadmissibleTrial(ToolkitError):
    """Trial function violates the boundary constraints of the test space."""


# foliation
class NearCriticalLevel(ToolkitError):
    """Requested level is too close to a critical value of the potential."""


class NotExtendable(ToolkitError):
    """A boundary framed loop is in the trivial class; chain not applicable."""


class LoopsNotDisjoint(ToolkitError):
    """Foliation loops overlap."""


class NotC2(ToolkitError):
    """Graph function lacks the second derivatives required."""
