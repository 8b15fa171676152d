"""mflab: numerical checks that invariant measures of mean-field models converge to invariant measures of their limit."""
__version__ = "0.1.0"
