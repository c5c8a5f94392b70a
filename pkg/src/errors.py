"""
Exception hierarchy shared by every conebook module.

Numerical errors map to CLI exit status 3, ConfigError to exit status 2.
"""


class ConebookError(Exception):
    """Base class for all numerical errors raised by the laboratory"""
    code = "numerical_error"


class BindingPoint(ConebookError):
    code = "binding_point"


class QuadratureDivergence(ConebookError):
    code = "quadrature_divergence"


class NoEnclosingCone(ConebookError):
    code = "no_enclosing_cone"


class ZeroVector(ConebookError):
    code = "zero_vector"


class AngleOutOfRange(ConebookError):
    code = "angle_out_of_range"


class EmptyA(ConebookError):
    code = "empty_a"


class FieldDegenerate(ConebookError):
    code = "field_degenerate"


class NonIntegrableTau(ConebookError):
    code = "non_integrable_tau"


class StuckAtBinding(ConebookError):
    code = "stuck_at_binding"


class StepTooLarge(ConebookError):
    code = "step_too_large"


class InvalidVolatility(ConebookError):
    code = "invalid_volatility"


class ConfigError(Exception):
    """Unknown key, bad value, or inconsistent experiment description"""
    code = "config_error"
