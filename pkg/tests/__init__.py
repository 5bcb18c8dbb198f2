"""Test package for phonon-walk."""
