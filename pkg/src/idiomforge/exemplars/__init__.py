"""Packaged default exemplar files."""
