"""
Limits of permutation-invariant policies: 1-WL colours, tied parameters and an unlearnable target
"""
