"""Multi-discriminator GAN co-training with weight and data discrepancy on a numpy autodiff core."""

__version__ = "0.1.0"
