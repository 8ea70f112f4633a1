"""specmix: ensemble endmember fusion with spatial-context attention for hyperspectral unmixing."""

__version__ = "0.1.0"
