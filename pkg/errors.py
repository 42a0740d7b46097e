"""
Exception hierarchy shared by every module of the toolkit.

Each class carries the process exit code the command-line front end uses
when the error escapes to the top level: 1 for user errors, 2 for budget
exhaustion, 3 for internal invariant violations.
"""
from typing import Optional


class ToolkitError(Exception):
    """Base class for all toolkit errors"""
    exit_code = 1


# ==========================
# TYPING
# ==========================

class UnboundVariable(ToolkitError):
    pass


class ArityMismatch(ToolkitError):
    pass


class ChoiceNotGround(ToolkitError):
    pass


class ApplicationMismatch(ToolkitError):
    pass


class TypeMismatch(ToolkitError):
    pass


class OrderTooHigh(ToolkitError):
    pass


# ==========================
# REDUCTION
# ==========================

class NotGround(ToolkitError):
    pass


class Stuck(ToolkitError):
    pass


class NoTreeReachable(ToolkitError):
    pass


class FuelExhausted(ToolkitError):
    exit_code = 2


# ==========================
# GRAMMARS AND TREES
# ==========================

class GrammarSyntaxError(ToolkitError):
    pass


class GrammarTypeError(ToolkitError):
    def __init__(self, message: str, location: Optional[str] = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class MissingRules(ToolkitError):
    pass


class NotWordShaped(ToolkitError):
    pass


class NotBrAlphabet(ToolkitError):
    pass


class NonWordAlphabet(ToolkitError):
    pass


# ==========================
# DERIVATIONS AND TRANSFORMATIONS
# ==========================

class OutOfRangeFlag(ToolkitError):
    pass


class NotAReduct(ToolkitError):
    pass


class ZeroCounter(ToolkitError):
    pass


class NoDerivation(ToolkitError):
    pass


class RefinementSpaceTooLarge(ToolkitError):
    exit_code = 2


# ==========================
# PUMPING
# ==========================

class BudgetExhausted(ToolkitError):
    exit_code = 2

    def __init__(self, message: str, stage: str = "search"):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


class FiniteLanguageSuspected(ToolkitError):
    exit_code = 2


class ChainViolation(ToolkitError):
    def __init__(self, message: str, index: int):
        self.index = index
        super().__init__(f"step {index}: {message}")


class InvariantViolation(ToolkitError):
    exit_code = 3
