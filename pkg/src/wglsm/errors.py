"""Exception hierarchy shared by all modules."""


class WaveguideError(Exception):
    """Base class for every error raised by wglsm."""


class InvalidSpec(WaveguideError, ValueError):
    pass


class CutoffWavenumber(InvalidSpec):
    """The wavenumber sits on (or numerically at) a modal cutoff."""


class IndexOutOfRange(WaveguideError, IndexError):
    pass


class CoincidentPoints(WaveguideError, ValueError):
    pass


class SearchPointOutsideStrip(WaveguideError, ValueError):
    pass


class BasisMismatch(WaveguideError, ValueError):
    pass


class GeometryError(WaveguideError, ValueError):
    pass


class MeshGeometryMismatch(WaveguideError, ValueError):
    pass


class SingularSystem(WaveguideError, RuntimeError):
    """The discrete Helmholtz system could not be solved reliably.

    Usually a sign that the wavenumber is close to an exceptional value of
    the truncated problem.
    """


class CrossSectionOutsideDomain(WaveguideError, ValueError):
    pass


class InvalidArray(WaveguideError, ValueError):
    pass


class TooFewSensors(InvalidArray):
    pass


class InvalidFraction(WaveguideError, ValueError):
    pass


class DimensionMismatch(WaveguideError, ValueError):
    pass


class ZeroData(WaveguideError, ValueError):
    pass


class EmptyResponse(WaveguideError):
    """The response matrix carries no scattered energy; nothing to image."""


class HeaderMismatch(WaveguideError, ValueError):
    pass


class ConfigError(WaveguideError, ValueError):
    pass
