from setuptools import setup, find_packages

# Read the contents of your requirements.txt file
with open("requirements.txt") as f:
    required = [line for line in f.read().splitlines() if line and not line.startswith("#")]

# Read the contents of your README.md file for the project description
with open("README.md", "r", encoding="utf-8") as readme_file:
    long_description = readme_file.read()

setup(
    name="ghostflare",
    version="0.3.0",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    python_requires=">=3.9",
    install_requires=required,
    extras_require={"dev": ["pytest>=7.4", "hypothesis>=6.88"]},
    entry_points={
        "console_scripts": [
            "ghostflare=ghostflare.main:main_entry",
        ],
    },
    long_description=long_description,
    long_description_content_type="text/markdown",
)
