class CritScoreError(Exception):
    """Base class for library errors."""


class DomainError(CritScoreError, ValueError):
    """Argument outside the parameter or function domain."""


class SingularInformation(CritScoreError, ArithmeticError):
    """The (modified) information failed the positive-definiteness check.

    At a point believed to be regular this means a critical direction has
    gone undetected; ``detect_critical_numeric`` can locate it.
    """

    def __init__(self, message, pivot=None, index=None):
        super().__init__(message)
        self.pivot = pivot
        self.index = index


class EmptyRegion(CritScoreError):
    """No scanned point was accepted by the test."""


class RankDeficientDesign(CritScoreError, ValueError):
    """Fixed-effect cross-product matrix is singular."""


class MissingColumn(CritScoreError, KeyError):
    def __init__(self, column, available=()):
        self.column = column
        self.available = tuple(available)
        super().__init__(f"column {column!r} not found; available: {', '.join(self.available)}")

    def __str__(self):
        return self.args[0]


class NonNumericCell(CritScoreError, ValueError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"non-numeric value {value!r} in row {row}, column {column!r}")


class EmptyGroup(CritScoreError, ValueError):
    def __init__(self, group):
        self.group = group
        super().__init__(f"group {group!r} has no usable rows")


class NonOrthogonalNuisanceWarning(UserWarning):
    """Interest and nuisance blocks of the information are far from orthogonal.

    The plug-in efficient-information statistic is a heuristic in this case.
    """
