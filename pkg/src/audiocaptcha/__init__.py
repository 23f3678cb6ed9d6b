"""Audio CAPTCHA digit recognition: energy segmentation, RASTA-PLP cepstra,
PCA and one-vs-one RBF SVMs trained by SMO, scored by DTW alignment."""

__version__ = "0.1.0"
