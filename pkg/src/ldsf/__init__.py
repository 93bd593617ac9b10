"""Dynamical state-feedback synthesis for linear input-delay systems.

Computes stabilizing dynamical feedback laws with certified dissipative
performance (L2 gain, passivity, general quadratic supply rates) for
plants whose control enters after a fixed dead time.  The toolkit bundles
kernel-basis handling for distributed delays, the synthesis matrix
inequalities with an embedded interior-point SDP solver, an inner convex
approximation loop for the bilinear design condition, a delay-aware
simulator and a pseudospectral stability checker.
"""

__version__ = "0.1.0"
