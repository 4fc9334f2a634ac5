"""
Streaming posterior updates: each data chunk refines the previous model without revisiting old chunks
"""
