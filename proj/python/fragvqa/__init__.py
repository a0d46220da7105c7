from ._fragvqa import (
    DegenerateInputError,
    FragVqaError,
    GeometryError,
    ShapeError,
    krcc,
    loss_fusion,
    plcc,
    sample_fragment,
    sampled_fraction,
    srcc,
)

__all__ = [
    "DegenerateInputError",
    "FragVqaError",
    "GeometryError",
    "ShapeError",
    "krcc",
    "loss_fusion",
    "plcc",
    "sample_fragment",
    "sampled_fraction",
    "srcc",
]
