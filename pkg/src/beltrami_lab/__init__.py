"""Double Beltrami states and Hall MHD on the periodic box."""

__version__ = "0.1.0"
