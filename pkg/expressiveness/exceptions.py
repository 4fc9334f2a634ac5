"""
Errors raised while colouring graph states or tying policy parameters
"""

from utils import LabValidationError


class GraphStateError(LabValidationError):
    """A graph-valued state is malformed."""


class TyingError(LabValidationError):
    """States in one colour class cannot share a logit vector."""

    def __init__(self, color, message):
        self.color = color
        super().__init__(f'colour class {color}: {message}')
