"""RGBD salient object detection by deep fusion of hand-designed saliency cues."""

__version__ = "0.1.0"
