import setuptools

with open("docs/README.md", "r") as fh:
    long_description = fh.read()

__version__ = "0.1.0"

setuptools.setup(
    name="LABOToolkit",
    version=__version__,
    author="LABO",
    description='Latent space Bayesian optimization of robot hand morphology and grasp control',
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(exclude=["tests","examples*"]),
    classifiers=[
        "License :: OSI Approved :: Apache Software License",
        'Programming Language :: Python :: 3',
    ],
    python_requires='>=3.8',
    include_package_data=True,
    package_data={'LABOToolkit' : ['data/*.json']},
    install_requires=[
        'typer>=0.3.2', # For CLI
        'halo>=0.0.31', # For CLI
        'numpy>=1.19.5',
        'scipy>=1.6.0',
        'joblib>=1.0.0',
        'jsonschema>=3.2.0',
        'PyYAML>=5.4'
    ],
    entry_points = {
        'console_scripts': [
            'LABO = LABOToolkit.cli:app',
        ],
    }
)
