"""Attack-graph risk scoring and defense-placement optimization for IoT/CPS."""

__version__ = "0.1.0"
