#!/usr/bin/env python3
"""Generate a synthetic interchange dataset for exercising `disco reward/evaluate`.

Identities are random unit vectors; each image draws its faces from a pool of
identities with a configurable duplication rate (probability that a face
repeats an identity already used in the same image) and optional detection
dropout. Useful for producing datasets whose metric values are easy to reason
about.
"""

import argparse
import sys

import numpy as np

from disco.dataio import DatasetHeader, write_groups
from disco.embeddings import FaceRecord, normalize
from disco.rewards import GroupRecord, ImageRecord


def build_groups(args, rng):
    identities = [normalize(rng.standard_normal(args.dim))
                  for _ in range(args.identities)]
    groups = []
    for g in range(args.groups):
        target = int(rng.integers(2, args.max_people + 1))
        images = []
        for i in range(args.images_per_group):
            n_faces = target
            if rng.random() < args.miscount_rate:
                n_faces = max(0, target + int(rng.integers(-2, 3)))
            used: list[int] = []
            faces = []
            for _ in range(n_faces):
                if used and rng.random() < args.duplicate_rate:
                    ident = used[int(rng.integers(len(used)))]
                else:
                    ident = int(rng.integers(len(identities)))
                used.append(ident)
                jitter = identities[ident] + args.jitter * rng.standard_normal(args.dim)
                faces.append(
                    FaceRecord(
                        embedding=normalize(jitter),
                        confidence=float(rng.uniform(args.det_threshold, 1.0)),
                    )
                )
            images.append(
                ImageRecord(
                    image_id=f"g{g}-i{i}",
                    prompt_id=f"g{g}",
                    target_count=target,
                    faces=faces,
                    quality_raw=float(rng.uniform(3.0, 9.0)),
                    tag=rng.choice(["plain", "varied", None]),
                )
            )
        groups.append(GroupRecord(prompt_id=f"g{g}", images=images))
    return groups


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--output", required=True)
    parser.add_argument("--groups", type=int, default=10)
    parser.add_argument("--images-per-group", type=int, default=8)
    parser.add_argument("--identities", type=int, default=40)
    parser.add_argument("--max-people", type=int, default=7)
    parser.add_argument("--dim", type=int, default=8)
    parser.add_argument("--duplicate-rate", type=float, default=0.15)
    parser.add_argument("--miscount-rate", type=float, default=0.2)
    parser.add_argument("--jitter", type=float, default=0.08)
    parser.add_argument("--det-threshold", type=float, default=0.7)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    groups = build_groups(args, rng)
    header = DatasetHeader(
        embedding_dim=args.dim,
        det_threshold=args.det_threshold,
        producer="scripts/make_dataset.py",
    )
    write_groups(args.output, groups, header)
    n_images = sum(len(g.images) for g in groups)
    print(f"wrote {len(groups)} groups / {n_images} images to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
