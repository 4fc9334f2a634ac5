"""
Errors raised while configuring or running training
"""

from utils import LabError, LabValidationError


class LossConfigurationError(LabValidationError):
    """The loss kind does not match the parameters the policy carries."""


class TrainingDivergedError(LabError):
    """A loss or gradient became non-finite."""

    def __init__(self, epoch, trajectory_index, residual, trajectory=None):
        self.epoch = epoch
        self.trajectory_index = trajectory_index
        self.residual = residual
        self.trajectory = trajectory
        where = '' if trajectory is None else f' {list(trajectory.states)}'
        super().__init__(
            f'training diverged at epoch {epoch}: trajectory {trajectory_index}{where} has residual {residual}'
        )
