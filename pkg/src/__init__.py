# T³ 线性叶状结构的叶向复结构单值化工具
__version__ = "0.1.0"
