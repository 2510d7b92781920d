from setuptools import setup, find_packages

setup(
    name="ir-stylization",
    version="0.1.0",
    author="beniamine nahid",
    author_email="beniamine3155@gmail.com",
    packages=find_packages(exclude=["tests", "tests.*"]),
    entry_points={"console_scripts": ["ir-stylize=src.cli:main"]},
)
