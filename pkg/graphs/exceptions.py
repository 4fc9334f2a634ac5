"""
Errors raised while building, loading or querying state graphs
"""

from utils import LabValidationError


class GraphValidationError(LabValidationError):
    """A structural invariant of the state graph does not hold."""

    def __init__(self, invariant, message):
        self.invariant = invariant
        super().__init__(f'{invariant}: {message}')


class GraphFormatError(LabValidationError):
    """A graph document could not be parsed."""


class UnknownStateError(LabValidationError, KeyError):
    def __init__(self, state_id):
        self.state_id = state_id
        super().__init__(f'unknown state id {state_id!r}')

    def __str__(self):
        return self.args[0]
