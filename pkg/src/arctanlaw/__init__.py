"""Arctangent law toolkit."""
