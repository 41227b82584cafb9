"""Layer-wise graph explainability for ViG-style image classifiers."""

__version__ = "0.1.0"
