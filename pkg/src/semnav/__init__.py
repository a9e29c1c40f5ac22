"""semnav: 2D indoor-world simulator and semantic navigation stack."""

__version__ = "0.1.0"
