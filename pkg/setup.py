from setuptools import setup

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="gpdist",
    version="0.1.0",
    description="Gaussian-process distance-to-collision estimation and trajectory optimization for planar manipulators",
    long_description=long_description,
    long_description_content_type="text/markdown",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    packages=["gpdist"],
    python_requires=">=3.9",
    install_requires=[
        "numpy",
        "scipy",
        "tqdm"
    ],
    extras_require={
        "test": ["pytest"],
    },
    entry_points={
        "console_scripts": ["gpdist = gpdist.cli:main"],
    },
)
