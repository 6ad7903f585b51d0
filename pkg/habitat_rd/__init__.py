"""
habitat_rd: reaction-diffusion systems with species living on overlapping
habitats.

See `cli.py` for the command-line entry point and `solver.py` for the library
entry point.
"""
__version__ = '0.3.0'
