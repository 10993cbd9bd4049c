"""Exception types shared across the package."""

from __future__ import annotations


class DefectLabError(Exception):
    """Base class for every error raised by defectlab."""


class NonHermitianInput(DefectLabError, ValueError):
    pass


class NotPSD(DefectLabError, ValueError):
    pass


class DimMismatch(DefectLabError, ValueError):
    pass


class NotSubunital(DefectLabError, ValueError):
    pass


class InvalidDescriptor(DefectLabError, ValueError):
    pass


class RequiresStabilization(DefectLabError):
    pass


class ZeroCorner(DefectLabError, ValueError):
    pass


class ZeroDefect(DefectLabError, ValueError):
    pass


class NotNilpotent(DefectLabError):
    pass


class Divergent(DefectLabError):
    def __init__(self, spectral_radius: float):
        super().__init__(f"spectral radius {spectral_radius:.6g} is not below 1")
        self.spectral_radius = spectral_radius


class MalformedCertificate(DefectLabError, ValueError):
    pass


class SigmaNotPositive(DefectLabError, ValueError):
    pass


class InvalidParams(DefectLabError, ValueError):
    pass


class EpsilonTooLarge(DefectLabError, ValueError):
    pass


class ContractionNotObserved(DefectLabError):
    pass


class OmegaNotFaithful(DefectLabError, ValueError):
    pass


class HypothesesNotMet(DefectLabError):
    pass


class EmptySupport(DefectLabError, ValueError):
    pass


class WeightBelowThreshold(DefectLabError, ValueError):
    pass


class AtomsNotPartition(DefectLabError, ValueError):
    pass


class UnknownSuite(DefectLabError, ValueError):
    pass
