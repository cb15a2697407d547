"""Exception types shared across the codec."""


class FormatError(ValueError):
    """Malformed input file (bad magic, truncated record, non-finite value...)."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (step too coarse, bad thresholds...)."""


class CorruptStreamError(ValueError):
    """Entropy payload or container body is internally inconsistent."""


class MetricError(ValueError):
    """Metric cannot be computed from the given inputs (too few RD points...)."""
