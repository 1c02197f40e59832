"""
Console output, input parsing and plots
"""
