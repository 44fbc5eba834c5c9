"""This module contains support functions for the metrics code

This module contains constants and numpy helpers used to summarise the
timestamps of a simulation run.
"""

# Python imports.
import typing

# External imports.
import numpy as np

# Local imports.


# Constants.

PERCENTILES = (50, 90, 99)
"""The latency percentiles reported in summaries.
"""

MS_PER_S = 1000.0
"""Milliseconds in a second, for rates over simulated time.
"""


def get_ids_for_time_range(timestamps : np.ndarray, time_range : tuple) -> \
                                                                          tuple:
    """Finds the slice of sorted commit times that falls in a time range.

    Both ends of the range are inclusive, so a commit stamped exactly at the
    end of a run is counted.

    Args:
        timestamps (ndarray): Simulated times in ms, sorted ascending.
        time_range (tuple): (earliest, latest) in ms.

    Return:
        tuple: (first, after last) indexes into "timestamps".
    """

    earliest = np.searchsorted(timestamps, time_range[0], side="left")
    latest = np.searchsorted(timestamps, time_range[1], side="right")

    return int(earliest), int(latest)


def cumulative_counts(event_times : typing.Iterable[float],
                      sample_times : np.ndarray) -> np.ndarray:
    """Counts the events that happened at or before each sample time.

    Args:
        event_times (Iterable): Times of the events, in any order.
        sample_times (ndarray): Times at which to count.

    Returns:
        ndarray: The number of events at or before each sample time.
    """

    events = np.sort(np.asarray(list(event_times), dtype=float))
    return np.searchsorted(events, sample_times, side="right")


def percentiles(values : typing.Iterable[float],
                points : typing.Sequence[int] = PERCENTILES) -> dict:
    """Returns {point: percentile of values}, with None for no values."""

    data = np.asarray(list(values), dtype=float)
    if data.size == 0:
        return {point: None for point in points}
    return {point: float(np.percentile(data, point)) for point in points}


def rate_per_second(count : int, time_range : tuple) -> typing.Optional[float]:
    """Events per simulated second over time_range, None if it is empty.
    """

    duration = time_range[1] - time_range[0]
    if count == 0 or duration <= 0:
        return None
    return count * MS_PER_S / duration
