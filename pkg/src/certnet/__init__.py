"""certnet: data-driven compositional safety certificates for polynomial networks."""

__version__ = "0.1.0"
