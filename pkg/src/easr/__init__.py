"""Euclidean Alignment and Segment & Reconstruct augmentation for cross-subject EEG decoding."""

__version__ = "0.1.0"
