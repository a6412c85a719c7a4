"""Numerical kernels shared across modules, compiled with numba"""
