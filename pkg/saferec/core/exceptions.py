from typing import Optional, Sequence, Tuple

import numpy as np


class SaferecError(Exception):
    """
    Base class of every domain failure raised by saferec
    """


class EmptyData(SaferecError):
    def __init__(self, what: str = "trajectories"):
        self.what = what
        super().__init__(f"No {what} supplied: at least one is required")


class MalformedLog(SaferecError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"Malformed log line {line_no}: {reason}")


class MalformedFile(SaferecError):
    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"Malformed file {path}: {reason}")


class OverlappingSplits(SaferecError):
    def __init__(self, first: str, second: str, path: str):
        self.path = path
        super().__init__(
            f"The {first} and {second} splits are the same file {path}: "
            "they must be disjoint"
        )


class InvalidTrajectory(SaferecError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"Invalid trajectory: {reason}")


class UnknownAction(SaferecError):
    def __init__(self, action: int, n_actions: int):
        self.action = action
        self.n_actions = n_actions
        super().__init__(
            f"Unknown action {action}: policy has actions 0..{n_actions - 1}"
        )


class DegenerateWeights(SaferecError):
    def __init__(self, n: int):
        self.n = n
        super().__init__(
            f"All {n} importance weights are zero: the evaluation policy "
            "never agrees with the logged actions"
        )


class TooFewSamples(SaferecError):
    def __init__(self, n: int, required: int):
        self.n = n
        self.required = required
        super().__init__(
            f"Too few samples: got {n}, at least {required} required"
        )


class ConstantSeries(SaferecError):
    def __init__(self, value: float):
        self.value = value
        super().__init__(
            f"Series is constant at {value}: autocorrelation is undefined"
        )


class DegenerateSeries(SaferecError):
    def __init__(self, length: int, reason: str):
        self.length = length
        self.reason = reason
        super().__init__(f"Cannot fit series of length {length}: {reason}")


class EmptyCorpus(SaferecError):
    def __init__(self):
        super().__init__("Corpus contains no symbols")


class SingularEvaluation(SaferecError):
    def __init__(self, gamma: float):
        self.gamma = gamma
        super().__init__(
            f"Policy evaluation system is singular (gamma={gamma})"
        )


class ViolationFound(SaferecError):
    def __init__(
        self,
        violations: Sequence[Tuple[Tuple, int, float, float, float]],
    ):
        """
        violations - (suffix, action, theta, theta', slack) for each pair
        where the distance exceeded its bound
        """
        self.violations = list(violations)
        message_list = ["Lipschitz bound violated:"]
        for suffix, action, theta, theta_prime, slack in self.violations[:10]:
            message_list.append(
                f"suffix {suffix}, action {action}, "
                f"theta {theta} vs {theta_prime}: slack {slack}"
            )
        if len(self.violations) > 10:
            message_list.append(f"... {len(self.violations) - 10} more")
        super().__init__("\n".join(message_list))


class ImpossibleTransition(SaferecError):
    def __init__(self, state: int, action: int, next_state: int):
        self.state = state
        self.action = action
        self.next_state = next_state
        super().__init__(
            f"Transition {state} -{action}-> {next_state} has zero "
            "probability under every type in the belief"
        )


class Infeasible(SaferecError):
    def __init__(self, residual: Optional[float] = None):
        self.residual = residual
        message = "Linear program is infeasible"
        if residual is not None:
            message += f" (phase one residual {residual})"
        super().__init__(message)


class IterationLimitReached(SaferecError):
    def __init__(self, n_iters):
        self.n_iters = n_iters
        super().__init__(f"Iteration limit reached with {n_iters} iterations")


class UnboundedSolution(SaferecError):
    def __init__(self, x: np.ndarray) -> None:
        message_list = ["Solution unbounded - final solution was:"]
        for i, sol in enumerate(x):
            if sol > 10 ** 7:
                comment = " (probably unbounded)"
            else:
                comment = ""
            message_list.append(f"x[{i}]: {sol}{comment}")

        super().__init__("\n".join(message_list))


class SaferecWarning(UserWarning):
    pass


class MissingActionWarning(SaferecWarning):
    pass


class ConstantTargetWarning(SaferecWarning):
    pass


class AiccUndefinedWarning(SaferecWarning):
    pass


class ZeroEvidenceWarning(SaferecWarning):
    pass


class ForecastFallbackWarning(SaferecWarning):
    pass
