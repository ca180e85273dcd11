from pathlib import Path


class ReuseTracerError(Exception):
    pass


class ManifestError(ReuseTracerError):
    pass


class IngestError(ReuseTracerError):
    pass


class MalformedKeyError(ReuseTracerError):
    pass


class UnsortedInputError(ReuseTracerError):
    def __init__(self, source: str, position: int) -> None:
        super().__init__(f"Key regression in {source} at record {position}")
        self.source = source
        self.position = position


class SpillError(ReuseTracerError):
    def __init__(self, path: Path | str, reason: str) -> None:
        super().__init__(f"Cannot write {path}: {reason}")
        self.path = Path(path)


class UnknownProjectError(ReuseTracerError):
    pass


class CommitCycleError(ReuseTracerError):
    pass


class InconsistentInputsError(ReuseTracerError):
    pass


class OracleRefusedError(ReuseTracerError):
    pass


class StageMissingError(ReuseTracerError):
    def __init__(self, stage: str) -> None:
        super().__init__(f"Stage '{stage}' has not completed; run it first")
        self.stage = stage


class StageFailedError(ReuseTracerError):
    def __init__(self, stage: str, reason: str) -> None:
        super().__init__(f"Stage '{stage}' failed: {reason}")
        self.stage = stage
