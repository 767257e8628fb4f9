"""Figure renderer for openweyl artifact directories."""

from .render import ArtifactError, PlotSpec, render

__version__ = "1.0.0"
