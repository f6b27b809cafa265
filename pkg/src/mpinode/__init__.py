"""Neural vector fields trained with physics residuals and multiple-shooting continuity."""

__version__ = "0.1.0"
