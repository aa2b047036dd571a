"""Transmission-imaging simulation: projectors, Poisson noise, framelet and TV
denoising of projections, filtered backprojection and singular-direction geometry."""

__version__ = "0.1.0"
