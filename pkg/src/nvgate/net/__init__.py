"""Network front ends: HTTP client, sim-node server, gateway, workload runner."""
