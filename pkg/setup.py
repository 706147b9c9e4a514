import os

from smplab.version import get_version
from setuptools import find_packages, setup


def read(fname):
    return open(os.path.join(os.path.dirname(__file__), fname)).read()


setup(
    name='django-smp-lab',
    long_description=read('README.md'),
    long_description_content_type='text/markdown',
    version=get_version(),
    description='Numerical laboratory for the stochastic maximum principle of boundary controlled SPDEs',
    author='Druids',
    author_email='matllubos@gmail.com',
    url='https://github.com/druids/django-smp-lab',
    license='MIT',
    package_dir={'smplab': 'smplab'},
    include_package_data=True,
    packages=find_packages(exclude=('tests', 'tests.*')),
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Framework :: Django',
        'Framework :: Django :: 2.2',
        'Framework :: Django :: 3.0',
        'Framework :: Django :: 3.1',
        'Framework :: Django :: 3.2',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3.7',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3 :: Only',
        'Topic :: Scientific/Engineering :: Mathematics',
    ],
    install_requires=[
        'django>=2.2,<4.0',
        'django-chamber>=0.6.6',
        'tqdm>=4.28.1',
        'django-choice-enumfields>=1.1.0',
        'numpy>=1.20',
        'scipy>=1.5',
    ],
    zip_safe=False,
)
