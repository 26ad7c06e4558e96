"""Exception taxonomy shared across the package."""


class AcdError(Exception):
    """Base class for every error raised by this package."""


class ParseError(AcdError):
    """Input document is malformed or violates the documented file format."""


class ValidationError(AcdError):
    """One or more declared invariants are violated.

    Collects every violation found, not just the first; `violations` holds
    the individual messages.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class UnknownNodeError(AcdError):
    """A node id does not exist in the topology."""


class IllegalActionError(AcdError):
    """An action is not legal for the acting side's current view."""


class TerminalStateError(AcdError):
    """The episode already ended; no further steps are possible."""


class SpecError(AcdError):
    """A model or DBN build request is internally inconsistent."""


class TooLargeError(AcdError):
    """Exact inference would exceed the enumeration bounds."""


class ZeroEvidenceError(AcdError):
    """Conditioning event has probability zero."""


class LatentInterventionError(AcdError):
    """Interventions on latent variables are not allowed."""


class LatentEvidenceError(AcdError):
    """Latent variables cannot appear in evidence or observations."""


class EvidenceOrderingError(AcdError):
    """Evidence must sit strictly before the earliest intervened slice."""


class ReplayMismatchError(AcdError):
    """A replayed episode did not reproduce the recorded log."""
