"""Universal colors: cluster converged filters, then reuse one fixed color.

Attacks a small corpus, clusters the winning filters into Color IDs, and
measures how well each fixed color transfers to fresh images it has never
seen — the persistent-illumination scenario.
"""

import tempfile

import numpy as np

from chromafool import harness, load_image
from chromafool.attack import AttackConfig, AttackVariant
from chromafool.oracle import ColorgateOracle, OracleSession, OracleSpec
from chromafool.transforms import TransformRanges
from chromafool.universal import cluster_filters, evaluate_universal

N_TRAIN = 12
N_EVAL = 8

with tempfile.TemporaryDirectory() as tmp:
    train = harness.generate_synthetic(N_TRAIN, seed=5, out_dir=f"{tmp}/train")
    config = AttackConfig(variant=AttackVariant.WITHOUT_TRANSFORMS, seed=1)
    records, report = harness.run_batch(
        train, OracleSpec("builtin", "colorgate"), config, deterministic=True)
    print(f"attacked {report.n_images} images: FR {report.fr:.2f}, "
          f"AQ {report.aq:.0f}")

    converged = [(r.final_filter, r.image_id) for r in records if r.success]
    clusters = cluster_filters([c[0] for c in converged], k=3, seed=0,
                               member_ids=[c[1] for c in converged])
    for i, c in enumerate(clusters, start=1):
        r, g, b = (round(float(v), 3) for v in c.center.as_array())
        print(f"Color ID {i}: center ({r}, {g}, {b}), "
              f"{c.member_count} members")

    holdout = harness.generate_synthetic(N_EVAL, seed=987,
                                         out_dir=f"{tmp}/holdout")
    gallery = harness.load_gallery(holdout)
    entries = [(load_image(holdout.resolve(e)), e.identity) for e in holdout]
    print(f"\nfixed-color evaluation on {N_EVAL} held-out images "
          f"(20 transform draws each):")
    for i, c in enumerate(clusters, start=1):
        session = OracleSession(ColorgateOracle(gallery=gallery),
                                20 * N_EVAL + 1)
        result = evaluate_universal(c.center, entries, session,
                                    TransformRanges(), 20,
                                    np.random.default_rng(i))
        aqs = "n/a" if result.aqs is None else f"{result.aqs:.2f}"
        print(f"Color ID {i}: FR {result.fr:.2f}, AQS {aqs}, "
              f"OASR {result.oasr:.2f}")
