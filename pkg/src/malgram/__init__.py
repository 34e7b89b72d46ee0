"""Behavioral malware detection by parsing abstracted interaction events with
attribute grammars."""

__version__ = "0.1.0"
