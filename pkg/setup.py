#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
神经率失真估计与反向信道编码工具包 - 打包配置
"""

import os
from setuptools import setup

# 项目基本信息
PROJECT_NAME = "nerd-rcc"
VERSION = "1.0.0"
DESCRIPTION = "神经率失真估计（NERD）与反向信道编码（RCC）一次性有损压缩工具包"

# src/ 下的平铺模块
PY_MODULES = [
    'blahut_arimoto',
    'cli',
    'config_manager',
    'data_io',
    'errors',
    'excel_formatter',
    'gaussian_oracle',
    'nerd',
    'rcc_codec',
    'rd_curve',
    'rd_dual',
    'tensor_autodiff',
    'workflows',
    'zipf_huffman',
]

here = os.path.dirname(os.path.abspath(__file__))

# 读取requirements.txt
with open(os.path.join(here, 'requirements.txt'), 'r', encoding='utf-8') as f:
    requirements = [line.strip() for line in f if line.strip() and not line.startswith('#')]

# 读取README.md
with open(os.path.join(here, 'README.md'), 'r', encoding='utf-8') as f:
    long_description = f.read()

# 打包配置
setup(
    name=PROJECT_NAME,
    version=VERSION,
    description=DESCRIPTION,
    long_description=long_description,
    long_description_content_type='text/markdown',
    py_modules=PY_MODULES,
    package_dir={'': 'src'},
    install_requires=requirements,
    extras_require={
        'test': ['pytest>=7.0'],
    },
    python_requires='>=3.8',
    classifiers=[
        'Development Status :: 4 - Beta',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3.12',
        'Topic :: Scientific/Engineering :: Information Analysis',
    ],
    keywords='rate-distortion, lossy compression, channel simulation, blahut-arimoto',
    entry_points={
        'console_scripts': [
            'nerd-rcc = cli:main',
        ],
    },
)

if __name__ == '__main__':
    print(f"{PROJECT_NAME} v{VERSION} 打包配置已加载")
