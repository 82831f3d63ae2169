"""Data-driven real-time reachable set estimation: a learned quadrotor
dynamics model is excited online to fit windowed linear lifts, whose
reachable sets are sandwiched between contact-point hulls and supporting
halfspaces."""

__version__ = "0.1.0"
