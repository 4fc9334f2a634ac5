"""
Flow consistency in sub-graphs, misleading quality metrics, and exploration coverage
"""
