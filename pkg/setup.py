import os
import runpy
from setuptools import setup, find_packages

# Get version
cwd = os.path.abspath(os.path.dirname(__file__))
versionpath = os.path.join(cwd, 'expfunc', 'version.py')
version = runpy.run_path(versionpath)['__version__']

# Get the documentation
with open(os.path.join(cwd, 'README.md'), "r") as fh:
    long_description = fh.read()

CLASSIFIERS = [
    "Environment :: Console",
    "Intended Audience :: Science/Research",
    "Operating System :: OS Independent",
    "Programming Language :: Python",
    "Topic :: Scientific/Engineering :: Mathematics",
    "Development Status :: 4 - Beta",
    "Programming Language :: Python :: 3.8",
]

setup(
    name="expfunc",
    version=version,
    description="Densities of exponential and inverse-power functionals of subordinators",
    long_description=long_description,
    long_description_content_type="text/markdown",
    keywords=['subordinator', 'exponential functional', 'Dirichlet series', 'compound Poisson', 'Monte Carlo'],
    platforms=["OS Independent"],
    classifiers=CLASSIFIERS,
    packages=find_packages(exclude=['tests', 'tests.*']),
    include_package_data=True,
    install_requires=[
        "sciris>=0.16.5",
        "numpy",
        "scipy",
        "pandas",
        "numba",
        "psutil",
        "mpmath",
    ],
    entry_points={
        'console_scripts': ['expfunc=expfunc.cli:main'],
    },
)
