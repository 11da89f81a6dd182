#!/usr/bin/env python3
"""
Setup script for Smoke-RPO.

Kept for tooling that cannot build from pyproject.toml alone; all metadata
lives in pyproject.toml.
"""

from setuptools import setup

if __name__ == "__main__":
    setup()
