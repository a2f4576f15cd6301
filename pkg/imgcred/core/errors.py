class ImgCredError(Exception):
    """Base error. `exit_code` is what the command line returns for it."""

    exit_code = 2

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class UsageError(ImgCredError):
    exit_code = 1


class DataError(ImgCredError):
    exit_code = 2


class NumericError(ImgCredError):
    exit_code = 3


class ManifestError(DataError):
    def __init__(self, detail: str, line_number: int | None = None):
        if line_number is not None:
            detail = f"line {line_number}: {detail}"
        super().__init__(detail)
        self.line_number = line_number


class DecodeError(DataError):
    pass


class ShapeError(DataError):
    pass


class SingleClassError(DataError):
    pass


class LockHeldError(UsageError):
    pass


class BoostIterationError(NumericError):
    def __init__(self, detail: str, iteration: int):
        super().__init__(f"iteration {iteration}: {detail}")
        self.iteration = iteration


class EpsilonLimitReached(Exception):
    """Raised by compute_betas when the target error leaves the weak-learner range.

    Not an error: the boosting driver catches it and stops early.
    """

    def __init__(self, epsilon: float):
        super().__init__(f"target error {epsilon:.6f} >= 0.5")
        self.epsilon = epsilon
