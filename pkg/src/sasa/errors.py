"""Exception hierarchy shared across the package.

Usage errors (bad files, bad flags, inconsistent shapes) and numerical
failures (divergence, rank deficiency) are kept distinct so the CLI can
map them to different exit codes.
"""


class SasaError(Exception):
    """Base class for all package errors."""


class DataError(SasaError):
    """Invalid input data: parse failures, shape mismatches, bad partitions."""


class GraphError(SasaError):
    """Invalid adjacency input: self loops, unknown ids, bad grid dims."""


class ConfigError(SasaError):
    """Invalid solver/tuning configuration."""


class SolverError(SasaError):
    """Numerical failure: divergence, singular systems."""
