"""Exception hierarchy for the pamu package."""


class PamuError(Exception):
    """Base class for every error raised by pamu."""


# distributions and config

class InvalidDistribution(PamuError, ValueError):
    pass


class NegativeMass(InvalidDistribution):
    pass


class DegenerateDistribution(InvalidDistribution):
    pass


class SumMismatch(InvalidDistribution):
    pass


class ConfigError(PamuError, ValueError):
    pass


class VocabularyMismatch(PamuError, ValueError):
    pass


class InsufficientHistory(PamuError, ValueError):
    pass


class OutOfRange(PamuError, ValueError):
    pass


# extraction

class ExtractionError(PamuError):
    pass


class ExtractorUnavailable(ExtractionError):
    pass


class ExtractorTimeout(ExtractorUnavailable):
    pass


class MalformedResponse(ExtractionError):
    pass


class NonSimplexScores(MalformedResponse):
    pass


class MissingAnnotation(ExtractionError):
    pass


class ZeroLength(ExtractionError, ValueError):
    pass


class EmptyHistory(ExtractionError, ValueError):
    pass


# generation

class GenerationError(PamuError):
    pass


class BackendUnreachable(GenerationError):
    pass


class BackendError(GenerationError):
    pass


class EmptyCompletion(GenerationError):
    pass


# evaluation / harness

class EmptyReference(PamuError, ValueError):
    pass


class ParseError(PamuError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidSpec(PamuError, ValueError):
    pass
