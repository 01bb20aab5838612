"""Export pipeline: bundle contents, determinism, failure handling."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from embedexport import (
    ExportJob,
    InputError,
    TagError,
    export_embeddings,
    read_embeddings,
    split_tag,
)

ENCODER = "hash16"


def make_images(tmp_path: Path, names_payloads: list[tuple[str, bytes]]) -> list[str]:
    paths = []
    for name, payload in names_payloads:
        p = tmp_path / name
        p.write_bytes(payload)
        paths.append(str(p))
    return paths


@pytest.fixture()
def image_job(tmp_path: Path) -> ExportJob:
    inputs = make_images(
        tmp_path,
        [
            ("weld-01.png", bytes(range(64)) * 3),
            ("weld-02.png", b"porosity pocket" * 9),
            ("cast-07.png", b"\x01\x02\x03" * 40),
        ],
    )
    return ExportJob(
        kind="images",
        inputs=tuple(inputs),
        tags=("widget/crack", "widget/crack", "widget/dent"),
        encoder_id=ENCODER,
        out_dir=str(tmp_path / "bundle"),
    )


def test_bundle_contains_embeddings_and_manifest(image_job: ExportJob) -> None:
    result = export_embeddings(image_job)
    assert result.count == 3
    assert result.dim == 16
    assert result.files == ("embeddings.adsk", "manifest.jsonl")
    rows = read_embeddings(Path(result.out_dir) / "embeddings.adsk")
    assert rows.shape == (3, 16)
    norms = np.linalg.norm(rows.astype(np.float64), axis=1)
    assert np.max(np.abs(norms - 1.0)) < 1e-5


def test_manifest_rows_describe_inputs(image_job: ExportJob) -> None:
    result = export_embeddings(image_job)
    lines = (Path(result.out_dir) / "manifest.jsonl").read_text().splitlines()
    docs = [json.loads(line) for line in lines]
    assert [d["doc_id"] for d in docs] == ["weld-01", "weld-02", "cast-07"]
    assert [d["lock_row"] for d in docs] == [0, 1, 2]
    assert [d["defect_type"] for d in docs] == ["crack", "crack", "dent"]
    assert all(d["category"] == "widget" for d in docs)


def test_text_jobs_store_the_prompt_as_summary(tmp_path: Path) -> None:
    job = ExportJob(
        kind="texts",
        inputs=("a photo of a cracked widget", "a flawless widget"),
        tags=("crack", "good"),
        encoder_id=ENCODER,
        out_dir=str(tmp_path / "prompts"),
    )
    result = export_embeddings(job)
    docs = [
        json.loads(line)
        for line in (Path(result.out_dir) / "manifest.jsonl").read_text().splitlines()
    ]
    assert [d["doc_id"] for d in docs] == ["prompt-000", "prompt-001"]
    assert docs[0]["summary"] == "a photo of a cracked widget"
    assert docs[0]["category"] == ""


def test_same_job_twice_writes_identical_bytes(image_job: ExportJob, tmp_path: Path) -> None:
    first = export_embeddings(image_job)
    second_job = ExportJob(
        kind=image_job.kind,
        inputs=image_job.inputs,
        tags=image_job.tags,
        encoder_id=image_job.encoder_id,
        out_dir=str(tmp_path / "bundle2"),
    )
    second = export_embeddings(second_job)
    for name in first.files:
        a = (Path(first.out_dir) / name).read_bytes()
        b = (Path(second.out_dir) / name).read_bytes()
        assert a == b, name


def test_patch_grid_writes_per_image_files(image_job: ExportJob) -> None:
    job = ExportJob(
        kind=image_job.kind,
        inputs=image_job.inputs,
        tags=image_job.tags,
        encoder_id=image_job.encoder_id,
        out_dir=image_job.out_dir,
        patch_grid=True,
    )
    result = export_embeddings(job)
    assert "patches/weld-01.adsk" in result.files
    assert "patches/weld-01.grid.json" in result.files
    tokens = read_embeddings(Path(result.out_dir) / "patches" / "weld-01.adsk")
    sidecar = json.loads(
        (Path(result.out_dir) / "patches" / "weld-01.grid.json").read_text()
    )
    assert tokens.shape == (sidecar["grid_h"] * sidecar["grid_w"], 16)


def test_failing_input_logs_and_fails_without_writing(
    tmp_path: Path, caplog: pytest.LogCaptureFixture
) -> None:
    inputs = make_images(tmp_path, [("ok.png", b"fine content"), ("bad.png", b"")])
    job = ExportJob(
        kind="images",
        inputs=tuple(inputs),
        tags=("crack", "dent"),
        encoder_id=ENCODER,
        out_dir=str(tmp_path / "bundle"),
    )
    with caplog.at_level("WARNING", logger="embedexport"):
        with pytest.raises(InputError, match="1 of 2 inputs failed"):
            export_embeddings(job)
    assert any("bad.png" in rec.getMessage() for rec in caplog.records)
    assert not (tmp_path / "bundle").exists()


def test_duplicate_stems_are_rejected(tmp_path: Path) -> None:
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    inputs = [str(tmp_path / "a" / "x.png"), str(tmp_path / "b" / "x.png")]
    for p in inputs:
        Path(p).write_bytes(b"data")
    job = ExportJob(
        kind="images",
        inputs=tuple(inputs),
        tags=("crack", "dent"),
        encoder_id=ENCODER,
        out_dir=str(tmp_path / "bundle"),
    )
    with pytest.raises(InputError, match="duplicate document id"):
        export_embeddings(job)


def test_job_validation() -> None:
    with pytest.raises(InputError):
        ExportJob(
            kind="video", inputs=("x",), tags=("t",), encoder_id=ENCODER, out_dir="o"
        )
    with pytest.raises(InputError):
        ExportJob(
            kind="texts", inputs=(), tags=(), encoder_id=ENCODER, out_dir="o"
        )
    with pytest.raises(TagError):
        ExportJob(
            kind="texts", inputs=("a", "b"), tags=("t",), encoder_id=ENCODER, out_dir="o"
        )
    with pytest.raises(TagError):
        ExportJob(
            kind="texts", inputs=("a",), tags=("",), encoder_id=ENCODER, out_dir="o"
        )
    with pytest.raises(InputError):
        ExportJob(
            kind="texts",
            inputs=("a",),
            tags=("t",),
            encoder_id=ENCODER,
            out_dir="o",
            patch_grid=True,
        )
    with pytest.raises(InputError, match="does not exist"):
        ExportJob(
            kind="images",
            inputs=("/no/such/image.png",),
            tags=("t",),
            encoder_id=ENCODER,
            out_dir="o",
        )


def test_split_tag_forms() -> None:
    assert split_tag("crack") == ("", "crack")
    assert split_tag("widget/crack") == ("widget", "crack")
    assert split_tag("metal parts/deep scratch") == ("metal parts", "deep scratch")
    with pytest.raises(TagError):
        split_tag("widget/")
