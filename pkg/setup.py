from setuptools import find_packages, setup

setup(
    name="dakscan",
    version="1.0.0",
    description="Dimension-averaged angular-kernel change-point detection for high-dimensional data",
    long_description="Offline scan, calibrated test and sliding-window monitoring for HDLSS data: "
                     "pooled-anchor angular kernel | HAC long-run variance | Gaussian max-quantile "
                     "threshold | Monte-Carlo simulation studies | JSON/CSV reports",
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*"]),
    include_package_data=True,
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.21.0",
        "scipy>=1.10.1",
        "pandas>=1.5.0",
        "psutil>=5.9.0",
        "tqdm>=4.64.0",
    ],
    extras_require={
        "test": [
            "pytest>=7.0",
            "hypothesis>=6.0",
            "mpmath>=1.2",
        ],
    },
    entry_points={
        "console_scripts": [
            "dakscan=dakscan.dakscan:main",
        ],
    },
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Programming Language :: Python :: 3.13",
    ],
)
