"""Exception hierarchy for mol2adr.

Every error raised on purpose by the package derives from :class:`Mol2AdrError`.
The ``exit_code`` attribute is what the CLI returns when the error escapes a
subcommand (2 = bad data, 3 = numeric failure).
"""

from typing import Optional


class Mol2AdrError(Exception):
    """Base class for all mol2adr errors."""

    exit_code = 2


# --- chemistry -------------------------------------------------------------


class ChemError(Mol2AdrError):
    """A molecule could not be parsed or perceived.

    Args:
        message: Human readable description
        offset: Byte offset into the source SMILES, when known
    """

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)


class SmilesSyntaxError(ChemError):
    pass


class EmptyInput(SmilesSyntaxError):
    pass


class UnbalancedParenthesis(SmilesSyntaxError):
    pass


class UnclosedRingBond(SmilesSyntaxError):
    pass


class UnknownElement(SmilesSyntaxError):
    pass


class MultiComponentInput(SmilesSyntaxError):
    pass


class BondOrderMismatch(SmilesSyntaxError):
    pass


class ValenceExceeded(ChemError):
    pass


class DisconnectedSubset(ChemError):
    pass


# --- fragmentation / graphs ------------------------------------------------


class RuleTableError(Mol2AdrError):
    """The BRICS rule file is malformed or has an unsupported version."""


class DomainError(Mol2AdrError, ValueError):
    """A weighting function was called outside its domain."""


class EmptyCorpus(Mol2AdrError):
    pass


class UnknownMotif(Mol2AdrError):
    pass


class NoKnownMotif(Mol2AdrError):
    pass


# --- numerics ---------------------------------------------------------------


class NumericError(Mol2AdrError):
    """Failures of the tensor engine or of training."""

    exit_code = 3


class ShapeMismatch(NumericError, ValueError):
    pass


class AllPositionsMasked(NumericError):
    pass


class NonScalarLoss(NumericError):
    pass


class StepOutOfRange(NumericError):
    pass


class NotOnTape(NumericError):
    pass


class NonFiniteLoss(NumericError):
    pass


# --- model ------------------------------------------------------------------


class TooManyAtoms(Mol2AdrError):
    pass


class SequenceTooLong(Mol2AdrError):
    pass


class UnknownMoleculeNode(Mol2AdrError):
    pass


class CheckpointFormatError(Mol2AdrError):
    pass


# --- pipeline ---------------------------------------------------------------


class HeaderMismatch(Mol2AdrError):
    pass


class EncodingError(Mol2AdrError):
    """An input text file is not valid UTF-8."""


class EmptyDataset(Mol2AdrError):
    pass


class TooFewRecords(Mol2AdrError):
    pass


class LengthMismatch(Mol2AdrError):
    pass


class UnknownDrug(Mol2AdrError):
    pass


class ConfigError(Mol2AdrError):
    """Bad configuration file or value; reported as a usage error."""

    exit_code = 1
