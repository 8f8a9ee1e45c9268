"""
ExpoMask
Well-exposed region masks for multi-exposure LDR stacks: ground-truth generation,
a compact U-Net trained to predict them, and segmentation metrics.
"""

__version__ = "1.0.0"
