class HardyFEMError(Exception):
    """Root of all errors raised by the library."""


class ParameterError(HardyFEMError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class MeshError(HardyFEMError):
    pass


class DegenerateCellError(MeshError):
    def __init__(self, cell_index: int, message: str | None = None):
        self.cell_index = int(cell_index)
        super().__init__(message or f"cell {self.cell_index} is degenerate (zero volume)")


class QuadratureError(HardyFEMError):
    def __init__(self, message: str, estimate: float | None = None, error: float | None = None):
        self.estimate = estimate
        self.error = error
        super().__init__(f"{message} (estimate={estimate}, error={error})")


class AssemblyError(HardyFEMError):
    pass


class EigenSolveError(HardyFEMError):
    pass


class FactorizationError(EigenSolveError):
    pass


class ConvergenceError(HardyFEMError):
    pass
