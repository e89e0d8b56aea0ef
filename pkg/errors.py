#!/usr/bin/env python3
"""
Error Types
Every failure the calculators can raise, each carrying a machine-readable
code and the exit status the command runner reports for it
"""


class PssError(Exception):
    """Base class for all power/sample-size calculation errors"""

    code = "ERROR"
    exit_code = 1

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def describe(self):
        """Single machine-readable line for the command runner"""
        return f"error={self.code} exit={self.exit_code}"


class ConfigError(PssError):
    code = "CONFIG"
    exit_code = 2


class IngestionError(PssError):
    code = "INGESTION"
    exit_code = 3

    def __init__(self, message, row=None, column=None, **details):
        if row is not None or column is not None:
            where = []
            if row is not None:
                where.append(f"row {row}")
            if column is not None:
                where.append(f"column '{column}'")
            message = f"{message} ({', '.join(where)})"
        super().__init__(message, row=row, column=column, **details)
        self.row = row
        self.column = column


class DomainError(PssError, ValueError):
    code = "DOMAIN"
    exit_code = 4


class SingularityError(PssError):
    code = "SINGULAR"
    exit_code = 4


class InfeasibleError(PssError):
    code = "INFEASIBLE"
    exit_code = 4


class DegenerateApproximationError(PssError):
    code = "DEGENERATE"
    exit_code = 4


class EstimationError(PssError):
    code = "ESTIMATION"
    exit_code = 4


class ConvergenceError(PssError):
    code = "NONCONVERGENCE"
    exit_code = 5
