"""Experiment orchestration, acceptance suite and command line interface."""

from .experiment import Experiment, Instance, run_experiment, run_trial

__all__ = ["Experiment", "Instance", "run_experiment", "run_trial"]
