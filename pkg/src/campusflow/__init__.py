"""Event-driven mesoscopic traffic simulation for campus-scale road networks."""

__version__ = "0.1.0"
