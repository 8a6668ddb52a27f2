"""Rowhammer TRR tracker simulator built around DSAC, a stochastic Space Saving variant."""
from .analysis import (AnalysisParams, lifetime_for, p_consecutive_filter, p_filter_general,
                       required_counters, twice_bound)
from .baselines import BaselineConfig
from .dsac import DSAC, DsacConfig, SpaceSaving, time_weight
from .engine import DisturbanceReport, build_tracker, run_simulation, sweep
from .errors import ConfigError, PatternError, RefreshBudgetWarning, TraceError
from .patterns import ActivationStream, PatternSpec, generate
from .timing import TABLE1, TimingConfig, mpa_per_refi, mpa_per_refw

__version__ = "0.1.0"
