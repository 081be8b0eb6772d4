"""
Redynis: traffic-aware dynamic repartitioning for a replicated key-value store
"""
