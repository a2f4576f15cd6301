"""Image credibility classification via weak-label domain transfer."""

__version__ = "0.1.0"
