"""
Per-node request handling
"""
