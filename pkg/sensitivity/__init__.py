"""
Single-edge flow imbalances, the total variation they cause, and the bounds on it
"""
