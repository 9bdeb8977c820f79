"""Joint deconvolution and segmentation with a preconditioned proximal Langevin Gibbs sampler."""

__version__ = "0.1.0"
