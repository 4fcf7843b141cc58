"""Feasibility of coordinated motion for groups of nonholonomic vehicles."""

__version__ = "0.1.0"
