"""
Setup script for polystab.

For modern Python packaging, see pyproject.toml.
This file is maintained for backward compatibility.
"""

from setuptools import setup

# All configuration is in pyproject.toml
setup()
