"""Local encoders: a deterministic featurizer plus a CLIP checkpoint adapter.

The encoder id picks the backend:

    hash<dim>              byte-histogram featurizer, e.g. ``hash768``
    clip:<dir>[@<layer>]   CLIP checkpoint in a local directory

The hash featurizer is not a learned model. It projects a byte-value
histogram of the input through a projection matrix fixed by the encoder
id, so it gives reproducible unit vectors with the right shapes on any
machine with no model weights; two inputs with the same byte multiset
map to the same vector. The CLIP adapter owns the deep-learning
dependencies and loads strictly local checkpoints (``@<layer>`` picks
the vision hidden state used for patch tokens). No encoder touches the
network.

Every embed method returns float32 rows of unit norm; image patch
tokens come back with their grid shape.
"""

from __future__ import annotations

import hashlib
import re
from pathlib import Path

import numpy as np

from .errors import EncoderError, InputError

__all__ = ["HashEncoder", "ClipEncoder", "get_encoder", "HASH_PATCH_GRID"]

# The featurizer has no notion of image resolution, so its "patch
# tokens" are histograms of contiguous byte ranges on a fixed grid.
HASH_PATCH_GRID = (4, 4)


class HashEncoder:
    """Deterministic byte-histogram featurizer."""

    def __init__(self, dim: int) -> None:
        if dim < 1:
            raise EncoderError(f"hash encoder dim must be >= 1, got {dim}")
        self.dim = dim
        self.name = f"hash{dim}"
        digest = hashlib.sha256(self.name.encode("ascii")).digest()
        seed = np.frombuffer(digest, dtype="<u4")
        # fixed "weights": one projection row per byte value
        rng = np.random.default_rng(seed.tolist())
        self._projection = rng.standard_normal((256, dim))

    def embed_text(self, text: str) -> np.ndarray:
        return self._embed(text.encode("utf-8"), "text input")

    def embed_file(self, path: str | Path) -> np.ndarray:
        return self._embed(_read_bytes(path), str(path))

    def patch_tokens(self, path: str | Path) -> tuple[np.ndarray, int, int]:
        """Unit-norm tokens for contiguous byte chunks plus the grid shape."""
        grid_h, grid_w = HASH_PATCH_GRID
        cells = grid_h * grid_w
        data = _read_bytes(path)
        if len(data) < cells:
            raise InputError(
                f"{path}: {len(data)} bytes cannot fill a {grid_h}x{grid_w} patch grid"
            )
        bounds = [len(data) * i // cells for i in range(cells + 1)]
        feats = np.stack(
            [self._features(data[bounds[i] : bounds[i + 1]]) for i in range(cells)]
        )
        tokens = feats @ self._projection
        norms = np.linalg.norm(tokens, axis=1)
        if np.any(norms == 0.0):
            raise InputError(f"{path}: degenerate content, zero patch feature")
        return (tokens / norms[:, None]).astype(np.float32), grid_h, grid_w

    @staticmethod
    def _features(data: bytes) -> np.ndarray:
        counts = np.bincount(np.frombuffer(data, dtype=np.uint8), minlength=256)
        return counts / len(data)

    def _embed(self, data: bytes, label: str) -> np.ndarray:
        if not data:
            raise InputError(f"{label}: empty input")
        vec = self._features(data) @ self._projection
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise InputError(f"{label}: degenerate content, zero feature vector")
        return (vec / norm).astype(np.float32)


class ClipEncoder:
    """Adapter over a local CLIP checkpoint via transformers.

    Image and text embeddings come from the joint projection heads;
    ``layer`` selects the vision hidden state sliced into patch tokens
    (-1 is the final layer).
    """

    def __init__(self, model_dir: str, layer: int = -1) -> None:
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as err:
            raise EncoderError(
                "clip encoders need the transformers and torch packages; "
                "install the 'clip' extra"
            ) from err
        try:
            self._model = CLIPModel.from_pretrained(model_dir, local_files_only=True)
            self._processor = CLIPProcessor.from_pretrained(
                model_dir, local_files_only=True
            )
        except (OSError, ValueError) as err:
            raise EncoderError(
                f"no usable local clip checkpoint at {model_dir}: {err}"
            ) from err
        self._torch = torch
        self._model.eval()
        self.layer = layer
        self.dim = int(self._model.config.projection_dim)
        suffix = f"@{layer}" if layer != -1 else ""
        self.name = f"clip:{model_dir}{suffix}"

    def embed_text(self, text: str) -> np.ndarray:
        if not text:
            raise InputError("text input: empty input")
        inputs = self._processor(text=[text], return_tensors="pt", padding=True)
        with self._torch.no_grad():
            feats = self._model.get_text_features(**inputs)
        return _unit(feats[0].numpy())

    def embed_file(self, path: str | Path) -> np.ndarray:
        with self._torch.no_grad():
            feats = self._model.get_image_features(pixel_values=self._pixels(path))
        return _unit(feats[0].numpy())

    def patch_tokens(self, path: str | Path) -> tuple[np.ndarray, int, int]:
        with self._torch.no_grad():
            out = self._model.vision_model(
                pixel_values=self._pixels(path), output_hidden_states=True
            )
        hidden = out.hidden_states[self.layer][0].numpy()
        tokens = hidden[1:]  # drop the class token
        side = int(round(len(tokens) ** 0.5))
        if side * side != len(tokens):
            raise EncoderError(
                f"{self.name}: {len(tokens)} patch tokens do not form a square grid"
            )
        norms = np.linalg.norm(tokens.astype(np.float64), axis=1)
        return (tokens / norms[:, None]).astype(np.float32), side, side

    def _pixels(self, path: str | Path):
        try:
            from PIL import Image
        except ImportError as err:
            raise EncoderError(
                "clip image encoding needs Pillow; install the 'clip' extra"
            ) from err
        try:
            image = Image.open(path).convert("RGB")
        except OSError as err:
            raise InputError(f"{path}: cannot decode image ({err})") from err
        return self._processor(images=[image], return_tensors="pt").pixel_values


def _unit(vec: np.ndarray) -> np.ndarray:
    arr = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise InputError("encoder produced a zero vector")
    return (arr / norm).astype(np.float32)


def _read_bytes(path: str | Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}") from err


def get_encoder(encoder_id: str) -> HashEncoder | ClipEncoder:
    """Resolve an encoder id to a ready encoder."""
    match = re.fullmatch(r"hash([1-9][0-9]*)", encoder_id)
    if match:
        return HashEncoder(int(match.group(1)))
    if encoder_id.startswith("clip:"):
        rest = encoder_id[len("clip:") :]
        model_dir, sep, layer_text = rest.rpartition("@")
        layer = -1
        if sep and re.fullmatch(r"-?[0-9]+", layer_text):
            layer = int(layer_text)
        else:
            model_dir = rest
        if not model_dir:
            raise EncoderError("clip encoder id needs a checkpoint directory")
        return ClipEncoder(model_dir, layer)
    raise EncoderError(
        f"unknown encoder id {encoder_id!r}; expected hash<dim> or clip:<dir>[@<layer>]"
    )
