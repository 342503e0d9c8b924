"""Batch analytics for gridded mobility trajectories.

The pipeline classifies users as returners or explorers from the ratio
of top-k to total radius of gyration, fits heavy-tailed distributions
to the radii, estimates per-user sequence entropy, tracks behavioral
transitions between periods, and measures activity outside walkable
home neighborhoods, all over 30-minute gridded trajectory records.
"""

__version__ = "0.1.0"

from .store import (  # noqa: F401
    Cell,
    DayType,
    IngestReport,
    ObservationRecord,
    PeriodSpec,
    PeriodView,
    TrajectoryStore,
    default_calendar,
    default_period,
    ingest_csv,
    select_period,
)
