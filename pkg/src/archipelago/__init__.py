"""Multi-island MAP-Elites program search with multi-candidate LLM generation."""

__version__ = "0.1.0"
