"""
Tests for peer clients
"""
