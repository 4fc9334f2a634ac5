"""
State graphs: construction, validation, queries and serialization
"""
