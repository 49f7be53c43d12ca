"""Exception types shared across the pipeline."""


class MuseError(Exception):
    """Base class for all errors raised by this package."""


class MalformedRecord(MuseError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateId(MuseError):
    def __init__(self, dup_id: str):
        super().__init__(f"duplicate id: {dup_id}")
        self.dup_id = dup_id


class EmptyText(MuseError):
    pass


class DimMismatch(MuseError):
    pass


class KTooLarge(MuseError):
    pass


class UniverseMismatch(MuseError):
    pass


class CyclicInput(MuseError):
    pass


class CorruptFile(MuseError):
    pass


class VersionMismatch(MuseError):
    pass


class UnknownNode(MuseError):
    def __init__(self, node_id: str):
        super().__init__(f"unknown node: {node_id}")
        self.node_id = node_id


class NoAnchor(MuseError):
    pass


class ProviderError(MuseError):
    """Base class for live-provider failures."""


class ProviderUnavailable(ProviderError):
    pass


class ProviderMalformedResponse(ProviderError):
    pass


class AuthFailure(ProviderError):
    pass


class EmptyCompletion(ProviderError):
    pass


class UnparseableCompletion(ProviderError):
    pass
