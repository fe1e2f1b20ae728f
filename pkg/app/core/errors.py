class RsbError(Exception):
    """所有求解器错误的基类"""


class AnsatzError(RsbError, ValueError):
    pass


class OrderingViolation(AnsatzError):
    pass


class RangeViolation(AnsatzError):
    pass


class ShapeMismatch(AnsatzError):
    pass


class DomainError(RsbError, ArithmeticError):
    """求值点落在公式定义域之外；iterate 记录出错时的迭代点。"""

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate


class SusceptibilityDivergence(DomainError):
    pass


class NonFiniteIntegrand(DomainError):
    pass


class BudgetExceeded(RsbError):
    pass


class MaxIterations(RsbError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class BracketViolation(RsbError, ValueError):
    pass
