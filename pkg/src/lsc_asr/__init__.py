"""Learnable Sinc-convolution front-end with a hybrid CTC/attention back-end, in numpy."""

__version__ = "0.1.0"
