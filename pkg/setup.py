import os
from setuptools import setup


this_directory = os.path.abspath(os.path.dirname(__file__))
with open(os.path.join(this_directory, "README.md"), "r") as f:
    long_description = f.read()


setup(
    name="sandpile_odometer",
    packages=["sandpile_odometer"],
    version="0.1.0",
    license="MIT",
    description="Divisible sandpile odometers on discrete tori with correlated Gaussian weights",
    long_description=long_description,
    long_description_content_type="text/markdown",
    install_requires=["numpy>=1.22", "scipy>=1.8", "pytest>=7"],
    entry_points={
        "console_scripts": ["sandpile-odometer = sandpile_odometer.cli:main"],
        "pytest11": ["sandpile_odometer.plugin = sandpile_odometer.plugin"],
    },
    classifiers=[
        "Framework :: Pytest",
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    python_requires=">=3.8",
    zip_safe=False,
)
