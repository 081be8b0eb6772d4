"""
Deterministic cluster simulation and workload generation
"""
