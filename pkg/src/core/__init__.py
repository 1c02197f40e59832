"""
Numerical core: normal probabilities, models, likelihood, estimation and features
"""
