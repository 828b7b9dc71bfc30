import json

from chromafool.conformance import (GOLDEN_REQUEST_ID, GOLDEN_RESPONSE,
                                    golden_image, golden_request_bytes,
                                    regenerate_golden_response,
                                    run_oracle_check)
from chromafool.oracle import OracleSpec, decode_verdict


class TestGoldenTranscript:
    def test_frozen_response_matches_builtin_arithmetic(self):
        assert regenerate_golden_response() == GOLDEN_RESPONSE

    def test_golden_image_is_accepted(self):
        verdict = decode_verdict(GOLDEN_RESPONSE, GOLDEN_REQUEST_ID)
        assert verdict.label == 1
        assert verdict.match_id is None
        assert 0.0 < verdict.quality < 1.0

    def test_request_bytes_well_formed(self):
        line = golden_request_bytes().decode("utf-8")
        assert line.endswith("\n")
        doc = json.loads(line)
        assert doc["id"] == GOLDEN_REQUEST_ID
        assert "image_png_b64" in doc

    def test_golden_image_deterministic(self):
        import numpy as np

        np.testing.assert_array_equal(golden_image().pixels,
                                      golden_image().pixels)

    def test_builtin_check_passes(self):
        ok, detail = run_oracle_check(OracleSpec("builtin", "colorgate"))
        assert ok, detail

    def test_builtin_check_fails_on_wrong_gate(self):
        ok, _ = run_oracle_check(OracleSpec("builtin", "colorgate"),
                                 secret_chroma=(0.2, 0.6, 0.2),
                                 tolerance=0.05)
        assert not ok
