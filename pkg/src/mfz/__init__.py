"""mfz: find what two heterogeneous sensor streams observe in common.

The package integrates coupled test systems, assembles multi-channel sensor
streams from them, extracts the shared latent variables with alternating
diffusion and jointly smooth functions, classifies which channels are
identifiable from the shared embedding, and learns cross-sensor observers
and one-step-ahead predictors.
"""

__version__ = "0.1.0"
