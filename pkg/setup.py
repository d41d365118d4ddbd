from setuptools import setup, find_packages

setup(
    name="goal-jump",
    version="0.1.0",
    description="Goal-conditioned jumping policies for a planar spring-legged biped, trained with PPO.",
    long_description=open("README.rst", "r", encoding="UTF-8").read(),
    license="MIT",
    keywords="reinforcement-learning ppo legged-robots jumping simulation",
    packages=find_packages(exclude=("tests",)),
    package_data={"goaljump": ["config/*.yaml"]},
    python_requires=">=3.8",
    install_requires=open("requirements.txt", "r", encoding="UTF-8").read().strip().splitlines(),
    extras_require={
        "readthedocs": open("requirements-docs.txt", "r", encoding="UTF-8").read().strip().splitlines(),
        "test": ["pytest"],
    },
    entry_points={"console_scripts": ["goaljump = goaljump.cli:main"]},
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Operating System :: OS Independent",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3"
    ]
)
