"""Unit tests for psrlab."""
