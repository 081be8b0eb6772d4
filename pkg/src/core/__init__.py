"""
Shared domain types and ownership-coefficient math
"""
