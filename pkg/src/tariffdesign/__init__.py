"""Peak and real-time HVAC tariff design as a single-level MILP."""

__version__ = "0.1.0"
