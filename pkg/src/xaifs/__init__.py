"""XAI-driven feature selection benchmark for network intrusion detection."""

__version__ = "0.1.0"
