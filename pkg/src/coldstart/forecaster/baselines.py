from __future__ import annotations

import numpy as np

from ..trace import InvocationSeries, SeriesTooShort


def seasonal_naive(s, period: int, horizon: int) -> np.ndarray:
    """Repeat the last observed ``period`` values across the horizon."""
    values = np.asarray(s.values if isinstance(s, InvocationSeries) else s, dtype=np.float64)
    if period < 1:
        raise ValueError("period must be >= 1")
    if len(values) < period:
        raise SeriesTooShort(f"length {len(values)} < period {period}")
    last = values[len(values) - period:]
    return np.array([last[k % period] for k in range(horizon)])
