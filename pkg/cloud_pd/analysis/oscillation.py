from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..error_handler import ValidationError
from ..i18n import t

DECAY_RATIO = 0.5


@dataclass(frozen=True)
class OscillationReport:
    amplitude_first: float
    amplitude_last: float
    decaying: bool
    degenerate: bool

    @property
    def ratio(self) -> float:
        if self.amplitude_first == 0.0:
            return float("nan")
        return self.amplitude_last / self.amplitude_first


def _amplitude(values: np.ndarray) -> float:
    # Peak to peak per component, largest component wins for vector series.
    return float(np.max(np.ptp(values, axis=0)))


def detect_oscillation(series, window: int = 3) -> OscillationReport:
    """Compare the peak-to-peak amplitude of the first and last `window` samples.

    A constant series is reported as degenerate and not decaying.
    """
    values = np.asarray(series, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if window < 1:
        raise ValidationError(t("error.positive", field="window", value=window), field="window")
    if values.shape[0] < 2 * window:
        raise ValidationError(
            t("error.oscillation.short", length=values.shape[0], required=2 * window), field="series"
        )
    first = _amplitude(values[:window])
    last = _amplitude(values[-window:])
    degenerate = first == 0.0 and last == 0.0
    return OscillationReport(
        amplitude_first=first,
        amplitude_last=last,
        decaying=not degenerate and last < DECAY_RATIO * first,
        degenerate=degenerate,
    )
