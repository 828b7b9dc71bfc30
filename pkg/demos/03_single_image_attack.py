"""One spoofed image versus the built-in gate, under all three variants.

Generates a tiny synthetic corpus, picks one image, and runs the
label-only attack (as), the quality-aware attack (woq) and the
transform-robust attack (full), printing what each one costs and finds.
"""

import os
import tempfile
import time

from chromafool import harness, load_image, save_image
from chromafool.attack import AttackConfig, AttackVariant, attack_one
from chromafool.oracle import ColorgateOracle, OracleSession

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

with tempfile.TemporaryDirectory() as tmp:
    manifest = harness.generate_synthetic(1, seed=123, out_dir=tmp)
    entry = manifest.entries[0]
    img = load_image(manifest.resolve(entry))
    gallery = harness.load_gallery(manifest)

    print(f"attacking {entry.identity}; gate verdict on the clean image: "
          f"{ColorgateOracle(gallery=gallery).verdict(img)}")

    for variant in (AttackVariant.AS, AttackVariant.WITHOUT_TRANSFORMS,
                    AttackVariant.FULL):
        config = AttackConfig(variant=variant, seed=7)
        session = OracleSession(ColorgateOracle(gallery=gallery),
                                config.query_limit)
        t0 = time.time()
        record, x_adv = attack_one(img, session, config,
                                   expected_identity=entry.identity,
                                   image_id=entry.identity)
        elapsed = time.time() - t0
        f = record.final_filter
        print(f"\n[{variant.value}] success={record.success} "
              f"queries={record.queries_used} "
              f"(+{record.verification_queries} verification) "
              f"iterations={record.iterations} in {elapsed:.1f}s")
        print(f"  filter ({f.r:.3f}, {f.g:.3f}, {f.b:.3f}), "
              f"adversariality {record.adversariality:.2f}, "
              f"quality {record.final_quality:.2f}, "
              f"identity matched: {record.matched_correct_identity}")
        if x_adv is not None:
            path = os.path.join(OUT, f"x_adv_{variant.value}.png")
            save_image(x_adv, path)
            print(f"  adversarial image -> {path}")
