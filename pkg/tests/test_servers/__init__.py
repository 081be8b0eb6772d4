"""
Tests for the node HTTP server
"""
