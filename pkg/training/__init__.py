"""
Training tabular GFlowNets with TB, DB, SubTB, TD3 and KL objectives
"""
