"""Multi-agent trajectory planning on spatiotemporal occupancy grids."""

__version__ = "0.1.0"
