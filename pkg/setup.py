import sys
import setuptools
from os import path
from setuptools.command.test import test as TestCommand

import neumann_lowrank

here = path.abspath(path.dirname(__file__))


class Tox(TestCommand):
    def finalize_options(self):
        TestCommand.finalize_options(self)
        self.test_args = []
        self.test_suite = True

    def run_tests(self):
        # tox is only importable once the test requirements are installed
        import tox
        errcode = tox.cmdline(self.test_args)
        sys.exit(errcode)


with open(path.join(here, 'README.rst'), encoding='utf-8') as f:
    long_description = f.read()

setuptools.setup(
    name="py-neumann-lowrank",
    version=neumann_lowrank.__version__,
    description="Low-rank truncated Neumann series for parametric diffusion problems",
    long_description=long_description,
    packages=setuptools.find_packages(exclude=("tests", "examples", "examples.*")),
    package_dir={'neumann_lowrank': 'neumann_lowrank'},
    classifiers=[
        "Programming Language :: Python",
        "License :: OSI Approved :: MIT License",
        "Natural Language :: English",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Operating System :: OS Independent",
    ],
    keywords='parametric PDE low-rank Neumann series finite elements Legendre',
    python_requires='>=3.8',
    install_requires=['numpy>=1.20', 'scipy>=1.6'],
    tests_require=['tox'],
    cmdclass={'test': Tox},
    entry_points={'console_scripts': ['neumann-lowrank = neumann_lowrank.cli:main']},
    zip_safe=False,
    include_package_data=True,
)
