"""
Scenario benchmarks and reports
"""
