"""Shared exception types."""


class HypnetError(Exception):
    """Base class for all domain errors raised by this package."""


class OovError(HypnetError, KeyError):
    """A term is not present in the embedding vocabulary."""

    def __init__(self, term: str):
        super().__init__(f"out-of-vocabulary term: {term!r}")
        self.term = term


class UnknownTermError(HypnetError):
    """A query term resolves to no node in the network."""

    def __init__(self, term: str):
        super().__init__(f"unknown term: {term!r}")
        self.term = term


class DisconnectedError(HypnetError):
    """No path exists between the two query nodes."""


class DegeneratePairError(HypnetError):
    """The two query terms resolve to the same node."""


class NetworkFormatError(HypnetError):
    """A persisted network file is corrupt or has an unsupported version."""
