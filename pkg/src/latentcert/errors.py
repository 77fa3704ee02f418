"""Typed error families.

The CLI maps these onto process exit codes: configuration problems exit 2,
numeric and feasibility failures exit 3. Library code raises; it never calls
sys.exit.
"""


class LatentCertError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(LatentCertError):
    """Run configuration is malformed or inconsistent."""


class ContractError(LatentCertError):
    """A documented precondition was violated by the caller's data."""


class NumericError(LatentCertError):
    """A numeric computation produced non-finite or unusable values."""


class DivergenceError(NumericError):
    """An iteration hit its cap without meeting its tolerance."""


class RankError(NumericError):
    """A matrix that must have full row rank is numerically rank deficient."""


class DegenerateGeometryError(NumericError):
    """Point set too thin to carry a 2-d convex hull."""


class InfeasibleError(LatentCertError):
    """A constrained program has an empty feasible set."""


class SynthesisError(LatentCertError):
    """Controller synthesis failed (e.g. unstable closed loop)."""


class CheckpointError(LatentCertError):
    """A model, dataset, or report file is malformed."""
