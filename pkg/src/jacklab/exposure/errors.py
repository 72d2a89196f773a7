class ExposureError(ValueError):
    pass


class SchemaError(ExposureError):
    def __init__(self, line_no: int, reason: str) -> None:
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class DuplicateKey(ExposureError):
    pass


class MissingBaseline(ExposureError):
    """A country in the newer snapshot has no row in the older one."""


class ZeroBaseline(ExposureError):
    pass


class EmptyDataset(ExposureError):
    pass
