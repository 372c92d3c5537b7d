"""flashlab: a trace-driven NAND flash reliability laboratory."""

__version__ = "0.1.0"
