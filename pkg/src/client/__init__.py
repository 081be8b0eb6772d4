"""
HTTP clients for talking to peer nodes
"""
