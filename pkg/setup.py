from setuptools import setup, find_packages

setup(
    name="emoretrieval",
    packages=find_packages(),
    version="1.0.0",
    description="Emotion-based speech-to-music retrieval with metric learning",
    license="BSD3",
    install_requires=[
        "scipy",
        "numpy",
        "matplotlib",
        "tqdm",
        "numba>=0.50.1",
    ],
    python_requires=">=3.8",
    package_data={"emoretrieval": ["resources/*.txt"]},
    entry_points={"console_scripts": ["emoretrieval=emoretrieval.cli:main"]},
    setup_requires=["pytest-runner",],
    tests_require=["pytest",],
)
