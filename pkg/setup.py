#!/usr/bin/env python3
"""Setup configuration for subunit-bench."""

from setuptools import setup, find_packages


# Read the README file
def read_long_description():
    with open("README.md", "r", encoding="utf-8") as fh:
        return fh.read()


# Runtime requirements only; dev tools live in extras_require
def read_requirements():
    runtime = []
    with open("requirements.txt", "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("# Testing"):
                break
            if line and not line.startswith("#"):
                runtime.append(line)
    return runtime


setup(
    name="subunit-bench",
    version="0.1.0",
    author="Subunit Bench Developers",
    author_email="dev@subunit-bench.org",
    description=(
        "Sub-unitarity measures and benchmarking simulations "
        "for bipartite quantum channels"
    ),
    long_description=read_long_description(),
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*"]),
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Physics",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.11",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.11,<3.12",
    install_requires=read_requirements(),
    extras_require={
        "dev": [
            "pytest>=7.4.0",
            "pytest-cov>=4.1.0",
            "pytest-asyncio>=0.21.0",
            "black>=23.7.0",
            "flake8>=6.0.0",
            "mypy>=1.4.0",
            "pre-commit>=3.3.0",
        ],
    },
    entry_points={
        "console_scripts": [
            "subunit=subunit.cli.commands:app",
        ],
    },
    zip_safe=False,
)
