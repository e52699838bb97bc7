"""Pedestrian swerve modelling, trajectory assimilation and symbolic regression."""

__version__ = "0.1.0"
