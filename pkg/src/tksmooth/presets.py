"""Named smoothers as noise-partition settings.

=========  ==========================  ==============================
name       Student's t on              Gaussian on
=========  ==========================  ==============================
l2         nothing                     everything
t-robust   all measurement components  all process components
t-trend    all process components      all measurement components
double-t   everything                  nothing
=========  ==========================  ==============================

Anything else is a custom :class:`~tksmooth.model.NoisePartition`, e.g.
:func:`trend_robust_partition` for a trusted sensor next to an unreliable one.
"""
from enum import Enum

from .errors import InvalidPreset
from .model import NoisePartition

__all__ = ["PresetKind", "make_preset", "trend_robust_partition", "PRESET_NAMES"]


class PresetKind(str, Enum):
    L2 = "l2"
    T_ROBUST = "t-robust"
    T_TREND = "t-trend"
    DOUBLE_T = "double-t"


PRESET_NAMES = tuple(k.value for k in PresetKind)

_ALIASES = {
    "l2": PresetKind.L2, "gauss": PresetKind.L2, "gaussian": PresetKind.L2,
    "t-robust": PresetKind.T_ROBUST, "trobust": PresetKind.T_ROBUST,
    "t-trend": PresetKind.T_TREND, "ttrend": PresetKind.T_TREND,
    "double-t": PresetKind.DOUBLE_T, "doublet": PresetKind.DOUBLE_T,
}


def _kind(kind):
    if isinstance(kind, PresetKind):
        return kind
    try:
        return _ALIASES[str(kind).strip().lower().replace("_", "-")]
    except KeyError:
        raise InvalidPreset(f"unknown preset {kind!r}; expected one of {PRESET_NAMES}") from None


def make_preset(kind, n, m, r=4.0, s=4.0):
    """Noise partition of a named smoother for state dimension ``n`` and measurement dimension ``m``."""
    kind = _kind(kind)
    if n < 1 or m < 1:
        raise InvalidPreset("dimensions must be positive")
    procs = tuple(range(n)) if kind in (PresetKind.T_TREND, PresetKind.DOUBLE_T) else ()
    meas = tuple(range(m)) if kind in (PresetKind.T_ROBUST, PresetKind.DOUBLE_T) else ()
    if (procs and not r > 0) or (meas and not s > 0):
        raise InvalidPreset("degrees of freedom must be positive for Student components")
    return NoisePartition(n, m, procs, meas, r, s)


def trend_robust_partition(n, m, trusted, r=4.0, s=4.0):
    """Student's t on every process component and on all measurement components except ``trusted``."""
    trusted = set(trusted)
    return NoisePartition(n, m, tuple(range(n)),
                          tuple(i for i in range(m) if i not in trusted), r, s)
