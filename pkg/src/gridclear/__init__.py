"""gridclear: desk-scale electricity market clearing engine.

Commits and dispatches generators over a daily horizon, couples the
commitment problem to an AC fast-decoupled power flow, clears hourly
dispatch and decomposes nodal prices into fuel, congestion and loss parts.
"""

__version__ = "0.1.0"
