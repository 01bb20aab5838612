"""Export jobs: what to encode, how each input is tagged, where to write."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import InputError, TagError

__all__ = ["ExportJob", "split_tag"]


def split_tag(tag: str) -> tuple[str, str]:
    """Split ``category/defect_type`` into parts; a bare tag is the defect type."""
    category, sep, defect = tag.rpartition("/")
    if not sep:
        return "", tag
    if not defect:
        raise TagError(f"tag {tag!r} has an empty defect type")
    return category, defect


@dataclass(frozen=True)
class ExportJob:
    """One export run over image paths or prompt texts.

    ``tags`` pairs with ``inputs`` one to one; each entry is either a
    bare defect type or ``category/defect_type``. Image inputs must
    exist on disk when the job is built.
    """

    kind: str  # "images" or "texts"
    inputs: tuple[str, ...]
    tags: tuple[str, ...]
    encoder_id: str
    out_dir: str
    patch_grid: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ("images", "texts"):
            raise InputError(f"job kind must be 'images' or 'texts', got {self.kind!r}")
        if not self.inputs:
            raise InputError("job has no inputs")
        if len(self.tags) != len(self.inputs):
            raise TagError(
                f"{len(self.inputs)} inputs need {len(self.inputs)} tags, "
                f"got {len(self.tags)}"
            )
        for tag in self.tags:
            if not tag:
                raise TagError("tags must be non-empty")
            split_tag(tag)
        if self.patch_grid and self.kind != "images":
            raise InputError("patch grids need image inputs")
        if self.kind == "images":
            for item in self.inputs:
                if not Path(item).is_file():
                    raise InputError(f"input image {item} does not exist")
