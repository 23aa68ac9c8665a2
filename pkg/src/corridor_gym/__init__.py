"""Fast-time multi-agent testbed for separation assurance in air-mobility corridors."""

__version__ = "0.1.0"
