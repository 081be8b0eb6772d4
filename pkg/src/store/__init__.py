"""
Data layer and metadata layer
"""
