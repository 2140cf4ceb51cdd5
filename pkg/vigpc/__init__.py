from importlib.metadata import PackageNotFoundError, version

from vigpc.vigpc import Experiment

try:
    __version__ = version("vigpc")
except PackageNotFoundError:
    # package is not installed
    pass
