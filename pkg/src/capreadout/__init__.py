"""Simulation and comparison of two capacitive sensor read-out interfaces.

* :mod:`capreadout.cfc` - relaxation-oscillator capacitance-to-frequency converter
* :mod:`capreadout.chopper` - chopper-stabilised charge-amplifier chain
* :mod:`capreadout.harness` - Monte Carlo, statistics, interface comparison
"""

__version__ = "0.1.0"
