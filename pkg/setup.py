import setuptools

setuptools.setup(
    name="qvpo", 
    version="0.1.0",
    description="Online reinforcement learning with diffusion policies trained by a Q-weighted denoising loss.",
    long_description=open('README.md').read(),
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages('src'),
    package_dir={'': 'src'},
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires='>=3.8',
    install_requires=[
        "numpy>=1.25",
        "scipy>=1.7",
        "pytest>=6.0",
        "hypothesis>=6.0", 
        "matplotlib>=3.3", 
        "PyYAML>=5.4", 
        "more-itertools>=8.4.0", 
        ],
    entry_points={
        "console_scripts": ["qvpo=qvpo.cli:main"],
    },
)
