"""edgetb: deterministic scenario-driven testbed for edge systems under
DDIL network conditions."""

__version__ = "0.1.0"
