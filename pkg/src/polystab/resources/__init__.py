"""
Bundled example polytope documents.
"""

from importlib import resources
from pathlib import Path
from typing import List

from ..core.exceptions import FileOperationError

_PACKAGE = "polystab.resources"


def list_examples() -> List[str]:
    """Names of the bundled examples, sorted."""
    folder = resources.files(_PACKAGE).joinpath("examples")
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def example_path(name: str) -> Path:
    """
    Path of a bundled example document.

    Raises:
        FileOperationError: If no example has that name
    """
    path = Path(str(resources.files(_PACKAGE).joinpath("examples", f"{name}.json")))
    if not path.is_file():
        raise FileOperationError(
            f"No bundled example named {name!r}; available: {', '.join(list_examples())}"
        )
    return path
