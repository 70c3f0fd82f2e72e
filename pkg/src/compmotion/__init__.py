"""Frame-level compensatory motion detection from video-level labels.

A video classifier is trained on whole-trial labels; gradient saliency on
its input marks the frames that drove a positive prediction, and those
frames become pseudo-labels for a per-frame classifier.
"""

__version__ = "0.1.0"
