"""
Placement daemon
"""
