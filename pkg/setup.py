"""
Install script for pavi.

Usage:
    pip install .
    pavi --help
"""

import os
import re

from setuptools import setup, find_packages

here = os.path.dirname(os.path.abspath(__file__))


def read_version():
    with open(os.path.join(here, "pavi", "__init__.py"), encoding="utf-8") as f:
        return re.search(r'^__version__ = "([^"]+)"', f.read(), re.M).group(1)


def read_requirements():
    """Runtime requirements: everything above the development section"""
    requirements = []
    with open(os.path.join(here, "requirements.txt"), encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line.startswith("# Optional/Development"):
                break
            if line and not line.startswith("#"):
                requirements.append(line)
    return requirements


setup(
    name="pavi",
    version=read_version(),
    description="F- and G-measure estimation for variable selection by weighted candidate ensembles",
    long_description=open(os.path.join(here, "README.md"), encoding="utf-8").read(),
    long_description_content_type="text/markdown",
    packages=find_packages(include=["pavi", "pavi.*"]),
    py_modules=["main"],
    python_requires=">=3.9",
    install_requires=read_requirements(),
    extras_require={"dev": ["black==23.11.0", "flake8==6.1.0", "pytest==7.4.3", "pytest-cov==4.1.0"]},
    entry_points={"console_scripts": ["pavi=main:main"]},
)
