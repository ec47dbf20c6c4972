"""Motion transduction between parametrically coupled mechanical resonators."""

__version__ = "0.1.0"
