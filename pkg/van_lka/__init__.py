"""
Django VAN-LKA
~~~~~~~~~~~~~~

A reusable Django package implementing Large Kernel Attention and the
Visual Attention Network backbone family on plain numpy arrays, with an
exact parameter/MAC cost engine and finite-difference gradient checks.
"""

__version__ = '0.1.0'
