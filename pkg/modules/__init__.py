"""
Bregman-Tikhonov regularization toolkit
Penalties, operators, solvers, the Bregman iteration and rate experiments
"""

__version__ = '0.1.0'
