import pytest

from namegrounder.data import default_library_path
from namegrounder.scene import load_object_library


@pytest.fixture(scope="session")
def library():
    return load_object_library(default_library_path())
