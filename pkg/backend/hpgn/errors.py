class HpgnError(Exception):
    """Base error; `detail` is the one-line diagnostic shown to users."""

    exit_code = 2

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class DimensionError(HpgnError):
    pass


class ContractError(HpgnError):
    pass


class StaleTapeError(HpgnError):
    pass


class NumericError(HpgnError):
    pass


class NonFiniteLossError(NumericError):
    pass


class ConfigurationError(HpgnError):
    pass


class IngestionError(HpgnError):
    pass


class CheckpointError(HpgnError):
    pass
