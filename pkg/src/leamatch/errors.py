"""Typed errors for the leamatch pipeline and session engine.

Every error carries a stable machine-readable ``code`` string; the HTTP
layer maps codes onto status classes (404 unknown ids, 409 state
violations, 422 bad payloads).
"""

from __future__ import annotations


class LeamatchError(Exception):
    """Base class; ``code`` is the stable identifier, not the message."""

    code = "Error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


# scan-core
class BadMagicError(LeamatchError):
    code = "BadMagic"


class CorruptHeaderError(LeamatchError):
    code = "CorruptHeader"


class DimensionMismatchError(LeamatchError):
    code = "DimensionMismatch"


class TooSparseError(LeamatchError):
    code = "TooSparse"


class NonFiniteUnmaskedError(LeamatchError):
    code = "NonFiniteUnmasked"


class InvalidScanError(LeamatchError):
    code = "InvalidScan"


class StoreCorruptionError(LeamatchError):
    code = "StoreCorruption"


class DuplicateScanError(LeamatchError):
    code = "DuplicateScan"


# surface-pipeline
class NoStableRegionError(LeamatchError):
    code = "NoStableRegion"


class InteriorTooNarrowError(LeamatchError):
    code = "InteriorTooNarrow"


class TooFewSamplesError(LeamatchError):
    code = "TooFewSamples"


class GapTooLongError(LeamatchError):
    code = "GapTooLong"


# striae-compare
class NoAdmissibleLagError(LeamatchError):
    code = "NoAdmissibleLag"


class FeatureUnavailableError(LeamatchError):
    code = "FeatureUnavailable"


# scoring
class ClassImbalanceError(LeamatchError):
    code = "ClassImbalance"


class DegenerateFeaturesError(LeamatchError):
    code = "DegenerateFeatures"


class AllMaskedError(LeamatchError):
    code = "AllMasked"


# examiner-service
class UnknownCaseError(LeamatchError):
    code = "UnknownCase"


class UnknownIdError(LeamatchError):
    code = "UnknownId"


class ScoresNotComputedError(LeamatchError):
    code = "ScoresNotComputed"


class OutOfOrderError(LeamatchError):
    code = "OutOfOrder"


class MissingSelectionError(LeamatchError):
    code = "MissingSelection"


class AlreadyActiveError(LeamatchError):
    code = "AlreadyActive"


class LevelNotActiveError(LeamatchError):
    code = "LevelNotActive"


class BadPhaseError(LeamatchError):
    code = "BadPhase"


class PrematureConclusionError(LeamatchError):
    code = "PrematureConclusion"


class AlreadyConcludedError(LeamatchError):
    code = "AlreadyConcluded"


#: Errors that signal an illegal state transition rather than a bad id
#: or malformed input; the service answers these with HTTP 409.
STATE_VIOLATIONS = (
    OutOfOrderError,
    MissingSelectionError,
    AlreadyActiveError,
    LevelNotActiveError,
    PrematureConclusionError,
    AlreadyConcludedError,
    ScoresNotComputedError,
)

NOT_FOUND = (UnknownCaseError, UnknownIdError)
