"""Model-agnostic evaluation and LIME explanation toolkit for Normal/OSCC histopathology classifiers."""

__version__ = "0.1.0"
