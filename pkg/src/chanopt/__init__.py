"""Design, costing and simulation of off-chain payment-channel networks."""

__version__ = "0.1.0"
