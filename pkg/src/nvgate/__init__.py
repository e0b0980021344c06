"""N-Version JSON-RPC gateway for blockchain nodes, with a simulated chaos harness."""

__version__ = "0.1.0"
