from pathlib import Path

from setuptools import find_packages, setup

project_dir = Path(__file__).resolve().parent

with (project_dir / "version.txt").open() as f:
    version = f.read().rstrip()

# We use the .in file because a library shouldn't pin versions, it breaks consumers'
# updates. We allow commented lines in this file
with (project_dir / "requirements" / "base.in").open() as f:
    requirements_raw = f.read().splitlines()

requirements_without_comments = [
    line for line in requirements_raw if line and not line.startswith("#")
]

setup(
    name="goldcorrect",
    version=version,
    description="Train classifiers on labels corrupted by noise, using a small trusted"
    " subset to estimate the corruption and correct the loss.",
    packages=find_packages(),
    package_data={"goldcorrect.test": ["data/*.json"]},
    include_package_data=True,
    zip_safe=False,
    python_requires=">=3.9",
    install_requires=requirements_without_comments,
    entry_points={"console_scripts": ["goldcorrect = goldcorrect.cli:main"]},
    classifiers=[
        "Programming Language :: Python :: 3",
    ],
)
