"""Multi-hop knowledge-graph question answering via hybrid relation-path
features coordinated with the question through rotate-and-scale complex-space
link prediction."""

__version__ = "0.1.0"
