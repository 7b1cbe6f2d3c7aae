"""
Error hierarchy for the topic-signals pipeline.

Management commands map these onto exit codes: InputDataError -> 2,
NumericalError -> 3, SelectionError -> 4.
"""


class TopicSignalError(Exception):
    """Base class for pipeline errors."""

    exit_code = 1


class InputDataError(TopicSignalError):
    """Malformed or inconsistent input: bad files, unknown ids, bad shapes."""

    exit_code = 2

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(TopicSignalError):
    """A numerical routine produced NaN or hit an unsolvable system."""

    exit_code = 3

    def __init__(self, message: str, iteration: int | None = None):
        self.iteration = iteration
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)


class SelectionError(TopicSignalError):
    """No topic count satisfied the selection rule."""

    exit_code = 4
