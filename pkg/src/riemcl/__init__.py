"""Self-supervised continual graph learning in adaptive constant-curvature spaces."""

__version__ = "0.1.0"
