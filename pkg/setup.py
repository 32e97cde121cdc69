from setuptools import find_packages, setup

setup(
    name="homopart",
    packages=find_packages(include=["homopart", "homopart.*"]),
    version="0.1",
    include_package_data=True,
    python_requires=">=3.10",
    install_requires=[
        "numpy >= 2.0",
        "scipy",
        "pyyaml",
    ],
    extras_require={
        "test": ["pytest", "hypothesis"],
    },
    package_data={
        "homopart": ["defaults.yaml"],
    },
    entry_points={
        "console_scripts": [
            "homopart = homopart.workbench.cli:main",
        ]
    },
)
