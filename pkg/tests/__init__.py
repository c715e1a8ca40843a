"""Unit test package for trace_ratio."""
