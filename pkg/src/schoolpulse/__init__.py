"""SchoolPulse: privacy-preserving K-12 school analytics platform."""

__version__ = "0.1.0"
