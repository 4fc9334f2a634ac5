"""
Command-line runner: shared command base, config files, outputs and run records
"""
