"""Attribute-conditioned face synthesis through an intermediate sketch stage.

The package trains two conditional generators: one maps a binary attribute
vector to a grayscale sketch pyramid, the second translates the sketch into a
color face pyramid under a richer attribute vector.  Training, evaluation,
a command line front end and an HTTP synthesis service live in the submodules.
"""

__version__ = "0.1.0"
