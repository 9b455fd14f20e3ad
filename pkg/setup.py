from setuptools import find_packages, setup

setup(
    name="schauder_lab",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "tests.*"]),
    python_requires=">=3.9",
    install_requires=[
        "numpy",
        "scipy",
        "pandas",
        "tabulate",
    ],
    entry_points={
        "console_scripts": [
            "schauder-lab=schauder_lab.experiments.cli:main",
        ],
    },
)
