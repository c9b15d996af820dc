#!/usr/bin/env python
from setuptools import find_packages, setup

install_requires = [
    "numpy>=1.19",
    "scipy>=1.5",
    "pandas>=1.1",
    "h5py",
    "tqdm>=4.58",
    "cvxopt>=1.2.5",
]

setup(
    name="maropf",
    version="0.1",
    description="Droop control design for radial distribution grids via restricted conic OPF",
    packages=find_packages(exclude=["contrib", "docs", "tests"]),
    package_data={"maropf": ["data/*.json", "data/*.csv"]},
    python_requires=">=3.6, <4",
    install_requires=install_requires,
    entry_points={"console_scripts": ["maropf=maropf.cli:main"]},
)
