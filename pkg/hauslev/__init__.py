"""Hausdorff-accurate density level set estimation"""

__version__ = "1.0.0"
