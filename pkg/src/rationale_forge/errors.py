"""Exception hierarchy. ``exit_code`` maps each family to a CLI exit status."""


class ForgeError(Exception):
    exit_code = 1


# retrieval (exit 2)
class RetrievalError(ForgeError):
    exit_code = 2


class PlatformUnavailable(RetrievalError):
    pass


class RateLimited(RetrievalError):
    pass


class MissingCachedResponse(RetrievalError):
    pass


# model access (exit 3)
class ModelError(ForgeError):
    exit_code = 3


class MissingRecording(ModelError):
    def __init__(self, fingerprint: str):
        super().__init__(f"no recording for fingerprint {fingerprint}")
        self.fingerprint = fingerprint


class ProviderError(ModelError):
    pass


class BudgetExceeded(ModelError):
    pass


class UnparseableOutput(ModelError):
    pass


class EmbedderUnavailable(ModelError):
    pass


# input contracts (exit 4)
class InputContractError(ForgeError):
    exit_code = 4


class MissingExplanations(InputContractError):
    pass


class PromptTooLarge(InputContractError):
    pass


class NoRationaleInput(InputContractError):
    pass


class MissingSource(InputContractError):
    pass


class IdMismatch(InputContractError):
    pass


class LengthMismatch(InputContractError):
    pass


class OutOfScale(InputContractError):
    pass


class OutOfRange(InputContractError):
    pass


class ZeroBase(InputContractError):
    pass


class InsufficientData(InputContractError):
    pass


class InsufficientCandidates(InputContractError):
    pass


# schema (exit 5)
class SchemaViolation(ForgeError):
    exit_code = 5

    def __init__(self, message: str, record_index: int | None = None, field_path: str = ""):
        where = []
        if record_index is not None:
            where.append(f"record {record_index}")
        if field_path:
            where.append(f"at {field_path}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.record_index = record_index
        self.field_path = field_path
