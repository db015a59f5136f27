"""Bundled example Hamiltonians."""

from importlib.resources import files


def path(name: str = "h2_2q.txt"):
    return files(__name__) / name
