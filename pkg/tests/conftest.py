import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from disco.embeddings import FaceRecord, normalize
from disco.rewards import GroupRecord, ImageRecord


def make_image(
    embeddings,
    image_id="img-0",
    prompt_id="p-0",
    target_count=None,
    quality_raw=None,
    tag=None,
):
    faces = [FaceRecord(embedding=normalize(e)) for e in embeddings]
    return ImageRecord(
        image_id=image_id,
        prompt_id=prompt_id,
        target_count=target_count if target_count is not None else max(len(faces), 1),
        faces=faces,
        quality_raw=quality_raw,
        tag=tag,
    )


def make_group(face_lists, prompt_id="p-0", target_count=None, quality_raw=None):
    if target_count is None:
        target_count = max(max((len(f) for f in face_lists), default=1), 1)
    images = [
        make_image(
            faces,
            image_id=f"img-{i}",
            prompt_id=prompt_id,
            target_count=target_count,
            quality_raw=quality_raw,
        )
        for i, faces in enumerate(face_lists)
    ]
    return GroupRecord(prompt_id=prompt_id, images=images)


def random_group(rng, n_images, d=8, max_faces=5, prompt_id="p-0",
                 quality=False, target_count=None):
    face_lists = []
    for _ in range(n_images):
        m = int(rng.integers(0, max_faces + 1))
        face_lists.append([rng.standard_normal(d) for _ in range(m)])
    tc = target_count if target_count is not None else int(rng.integers(1, 6))
    group = make_group(face_lists, prompt_id=prompt_id, target_count=tc)
    if quality:
        for img in group.images:
            img.quality_raw = float(rng.uniform(-1.0, 11.0))
    return group


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
