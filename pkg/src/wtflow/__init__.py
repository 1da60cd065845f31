"""Flow-matching laboratory.

Forward and time-reversed conditional flow matching with worst-transport
normalization, Euler ODE trajectory integration, anomaly scoring, and
geometric diagnostics, all deterministic under a single seed.
"""

__version__ = "0.1.0"
