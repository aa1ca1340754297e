"""Event-camera dynamic obstacle sense-and-avoid pipeline and scene simulator."""

__version__ = "0.1.0"
