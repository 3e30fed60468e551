"""Reference fixtures: the figure-captioning dimension space, its sample shape and pipeline."""

from __future__ import annotations

import json
from importlib import resources

from .dims import DimensionSpace, validate_space
from .shape import PartialShape, coord

# p: paper, f: captioned figure, t: OCR token, r: relevant paragraph,
# s: section, g: paragraph within a section
CAPTION_DIMS = ("p", "f", "t", "r", "s", "g")
CAPTION_ORDER = (
    ("p", "f"), ("p", "t"), ("p", "r"), ("p", "s"), ("p", "g"),
    ("f", "t"), ("f", "r"), ("s", "g"),
)


def caption_space() -> DimensionSpace:
    return validate_space(CAPTION_DIMS, CAPTION_ORDER)


def sample_space() -> DimensionSpace:
    """The four-dimension slice {p, s, g, f} used by the sample shape."""
    return caption_space().induced({"p", "s", "g", "f"})


PARAGRAPHS_PER_SECTION = (4, 3, 2, 0, 3)


def sample_shape(space: DimensionSpace | None = None) -> PartialShape:
    """One paper, five sections with 4/3/2/0/3 paragraphs, three figures."""
    space = space or sample_space()
    rs = [("p", coord(), 1), ("s", coord(p=0), 5), ("f", coord(p=0), 3)]
    rs += [("g", coord(p=0, s=i), n) for i, n in enumerate(PARAGRAPHS_PER_SECTION)]
    return PartialShape.from_resolutions(space, rs)


def pipeline_source() -> str:
    return resources.files("dimflow.data").joinpath("sci_cap_enhanced.rgf").read_text()


def reference_mocks() -> dict:
    return json.loads(resources.files("dimflow.data").joinpath("reference_mocks.json").read_text())


def sample_mocks() -> dict:
    """Mock lengths reproducing the sample shape for a single paper."""
    return json.loads(resources.files("dimflow.data").joinpath("sample_mocks.json").read_text())
