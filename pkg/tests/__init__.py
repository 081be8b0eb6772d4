"""
Test suite for Redynis
"""
