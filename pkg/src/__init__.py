"""
mvoprobit - Source Package
"""

__version__ = "1.0.0"
__author__ = "mvoprobit contributors"
__description__ = "Multivariate ordered probit estimation and stage-of-change tooling"
