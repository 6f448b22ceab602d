"""Spectral simulator and estimate checker for SPDEs with time-measurable symbols."""

from ._kernels import BACKEND
from .errors import (
    ConfigError,
    DivergentConstant,
    DomainError,
    DriverMismatch,
    InsufficientPaths,
    IoError,
    MissingEnvelope,
    OverflowGuard,
    ParseError,
    QuadratureFailure,
    SpecwnError,
    SupportTooWide,
    TierError,
    UnknownKind,
    UsageError,
    ValidationError,
)
from .symbol import (
    AssumptionConstants,
    ConstantGrid,
    Quadrature,
    SymbolSpec,
    classify_assumptions,
    compute_constants,
    envelope_symbol,
    eval_symbol,
    integrate_symbol,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AssumptionConstants",
    "ConfigError",
    "ConstantGrid",
    "DivergentConstant",
    "DomainError",
    "DriverMismatch",
    "InsufficientPaths",
    "IoError",
    "MissingEnvelope",
    "OverflowGuard",
    "ParseError",
    "Quadrature",
    "QuadratureFailure",
    "SpecwnError",
    "SupportTooWide",
    "SymbolSpec",
    "TierError",
    "UnknownKind",
    "UsageError",
    "ValidationError",
    "classify_assumptions",
    "compute_constants",
    "envelope_symbol",
    "eval_symbol",
    "integrate_symbol",
]
