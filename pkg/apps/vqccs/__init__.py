# VQC-CS app
__version__ = '0.1.0'
