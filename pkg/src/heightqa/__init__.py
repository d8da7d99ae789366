"""heightqa: benchmark factory and evaluation harness for height-aware
remote-sensing question answering."""

__version__ = "0.1.0"
