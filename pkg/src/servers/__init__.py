"""
FastAPI node server
"""
