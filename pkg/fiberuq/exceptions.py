class FiberUQError(Exception):
    """Base class of every error raised by the toolkit."""


class InvalidParameter(FiberUQError, ValueError):
    pass


# random fields

class DuplicatePoints(FiberUQError):
    pass


class NotPositiveDefinite(FiberUQError):
    pass


class UnsupportedFamily(FiberUQError):
    pass


class NonUniformGrid(FiberUQError):
    pass


class ShapeMismatch(FiberUQError, ValueError):
    pass


class DegenerateSite(FiberUQError):
    pass


class OutOfSupport(FiberUQError, ValueError):
    pass


class OutOfDomain(FiberUQError):
    pass


class InvalidField(FiberUQError, ValueError):
    pass


# constitutive

class UnreachableResolution(FiberUQError):
    pass


class NegativeDensity(FiberUQError):
    pass


class InvalidDeformation(FiberUQError):
    pass


# finite elements

class NonConvergence(FiberUQError):
    def __init__(self, message, load_factor=None):
        super().__init__(message)
        self.load_factor = load_factor


class MeshFieldMismatch(FiberUQError):
    pass


class ElementInversion(FiberUQError):
    pass


# surrogate

class DegenerateEnsemble(FiberUQError):
    pass


# aggregation

class TooFewSamples(FiberUQError):
    pass


class MismatchedPairs(FiberUQError):
    pass


# configuration and persistence

class InvalidConfig(FiberUQError):
    def __init__(self, details):
        super().__init__(f'Invalid run configuration: {details}')
        self.details = details


class IOFailure(FiberUQError):
    pass
