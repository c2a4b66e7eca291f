"""Image-to-LaTeX formula recognition with a length-aware decoder."""

__version__ = "0.1.0"
