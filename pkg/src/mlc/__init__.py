"""Microservice logical coupling (MLC) over git commit histories."""

__version__ = "0.1.0"
