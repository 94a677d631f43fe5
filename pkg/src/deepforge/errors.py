"""Exception hierarchy shared by every pipeline stage."""


class DeepForgeError(Exception):
    """Base class for all errors raised by this package."""


# --- transcript grammar ---


class TranscriptError(DeepForgeError):
    pass


class UnclosedTag(TranscriptError):
    def __init__(self, tag: str):
        super().__init__(f"opening tag <{tag}> has no matching </{tag}>")
        self.tag = tag


class MalformedToolJson(TranscriptError):
    def __init__(self, position: int, detail: str = ""):
        msg = f"tool call payload is not valid JSON at offset {position}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.position = position


class MultipleTerminalSegments(TranscriptError):
    def __init__(self, count: int = 2):
        super().__init__(f"message carries {count} terminal segments, expected at most one")
        self.count = count


class InvariantViolation(DeepForgeError):
    pass


# --- persistence ---


class IoFailure(DeepForgeError):
    pass


class SchemaMismatch(DeepForgeError):
    def __init__(self, line_number: int, detail: str = ""):
        msg = f"malformed record on line {line_number}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.line_number = line_number


# --- providers ---


class ProviderError(DeepForgeError):
    pass


class ProviderUnavailable(ProviderError):
    pass


class ContextOverflow(ProviderError):
    pass


class EmptyQuery(ProviderError):
    pass


class FetchFailure(ProviderError):
    def __init__(self, status: int, detail: str = ""):
        msg = f"FetchFailure({status})"
        if detail:
            msg += f" {detail}"
        super().__init__(msg)
        self.status = status


class NonHtmlContent(ProviderError):
    pass


class SandboxUnavailable(ProviderError):
    pass


# --- synthesis stages ---


class DegenerateBatch(DeepForgeError):
    """Every generated noun was a duplicate or excluded; the pool is saturated."""


class MalformedExtraction(DeepForgeError):
    pass


class InvalidDistribution(DeepForgeError):
    pass


class MalformedResult(DeepForgeError):
    pass


class NoResultBlock(MalformedResult):
    pass


class MissingKey(MalformedResult):
    def __init__(self, key: str):
        super().__init__(f"result block is missing required key {key!r}")
        self.key = key


class WrongType(MalformedResult):
    def __init__(self, key: str, expected: str):
        super().__init__(f"result key {key!r} must be {expected}")
        self.key = key


class BudgetExhausted(DeepForgeError):
    pass


class MalformedQaResponse(DeepForgeError):
    pass


class EmptyGraph(DeepForgeError):
    pass


# --- curation ---


class JudgeProtocol(DeepForgeError):
    pass


class TokenizerFailure(DeepForgeError):
    pass


class NonFiniteInput(DeepForgeError):
    pass


# --- pipeline / cli ---


class ConfigError(DeepForgeError):
    pass


class StageFailure(DeepForgeError):
    def __init__(self, stage: str, detail: str):
        super().__init__(f"stage {stage!r} failed: {detail}")
        self.stage = stage
