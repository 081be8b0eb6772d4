"""
Integration tests for the complete system
"""
