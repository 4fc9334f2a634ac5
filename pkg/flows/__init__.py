"""
Targets, tabular policies, flows, marginals and distances shared by every lab app
"""
