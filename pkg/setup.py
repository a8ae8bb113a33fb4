# !/usr/bin/env python

from setuptools import setup, find_packages

with open("README.md") as f:
    long_description = f.read()


setup(
    name="aweforge",
    packages=find_packages(".", exclude=["tests", "tests.*"]),
    package_data={"aweforge": ["conf/*.yaml"]},
    version="0.1.0",
    description="Acoustic word embeddings from self-supervised frame features.",
    install_requires=[
        "numpy",
        "pytz",
        "hydra-core",
        "frozendict",
        "jztools",
        "scipy",
        "numba",
        "soundfile",
        "scikit-learn",
    ],
    entry_points={"console_scripts": ["awe-forge=aweforge.cli:main"]},
    long_description=long_description,
    long_description_content_type="text/markdown",
)
