"""Attacking through the wire: the stdio bridge as an external oracle.

Requires the oracle-bridge package (see bridge/).  Runs the conformance
probe, then the same seeded attack against the built-in gate and against
the bridge child process, and checks the records agree.
"""

import sys
import tempfile

from chromafool import harness, load_image
from chromafool.attack import AttackConfig, AttackVariant, attack_one
from chromafool.conformance import run_oracle_check
from chromafool.oracle import (ColorgateOracle, ExecOracle, OracleSession,
                               parse_oracle_spec)

try:
    import oracle_bridge  # noqa: F401  (only to fail fast with a hint)
except ImportError:
    sys.exit("oracle-bridge is not installed; run: pip install -e bridge/")

BRIDGE = f"{sys.executable} -m oracle_bridge --mode stdio"

ok, detail = run_oracle_check(parse_oracle_spec(f'exec:"{BRIDGE}"'))
print(f"conformance probe: {'PASS' if ok else 'FAIL'} - {detail}")

with tempfile.TemporaryDirectory() as tmp:
    manifest = harness.generate_synthetic(1, seed=55, out_dir=tmp)
    img = load_image(manifest.resolve(manifest.entries[0]))
    config = AttackConfig(variant=AttackVariant.AS, seed=2)

    local_session = OracleSession(ColorgateOracle(), config.query_limit)
    local_record, _ = attack_one(img, local_session, config, image_id="x")

    wire_session = OracleSession(ExecOracle(BRIDGE), config.query_limit)
    wire_record, _ = attack_one(img, wire_session, config, image_id="x")
    wire_session.close()

print(f"\nbuiltin : {local_record.queries_used} queries, "
      f"filter {local_record.final_filter.as_array().round(4)}")
print(f"bridge  : {wire_record.queries_used} queries, "
      f"filter {wire_record.final_filter.as_array().round(4)}")
same = (local_record.queries_used == wire_record.queries_used
        and local_record.final_filter == wire_record.final_filter)
print(f"records identical across the wire: {same}")
