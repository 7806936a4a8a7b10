# Models package for the string-averaging projection toolkit

__version__ = '1.0.0'
