from .container import ContainerError, read_container, write_container
from .obj import mesh_to_obj, obj_to_mesh, read_obj, write_obj
from .pgm import pgm_from_bytes, read_pgm, write_pgm

__all__ = [
    "ContainerError",
    "read_container",
    "write_container",
    "mesh_to_obj",
    "obj_to_mesh",
    "read_obj",
    "write_obj",
    "pgm_from_bytes",
    "read_pgm",
    "write_pgm",
]
