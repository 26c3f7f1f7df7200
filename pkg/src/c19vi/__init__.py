"""County-level COVID-19 impact ranking and random-forest vulnerability index (C19VI)."""

__version__ = "0.1.0"
