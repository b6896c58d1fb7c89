"""Cell-free massive MIMO uplink simulator with eMBB/URLLC slicing: bandwidth
allocation, AP association and their alternating optimisation."""

__version__ = "0.1.0"
