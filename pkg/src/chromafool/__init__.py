"""chromafool: hard-label color-filter attacks on face pipelines.

A spoofed portrait is colorized by a three-component RGB filter, hardened
against physical variation by optimizing over sampled transforms, and the
filter is found with a particle swarm using nothing but the pipeline's
hard verdicts.  The package also extracts universal colors from converged
attacks, trains a color-robust toy defense, and ships a metrics harness
with built-in synthetic victims so everything runs on a desk.
"""

from .imagecore import (ColorFilter, ColorMode, Image, apply_filter,
                        grayscale, load_image, quantize, resize_bilinear,
                        save_image, to_working)
from .transforms import TransformParams, TransformRanges, sample_params
from .oracle import (BONAFIDE, SPOOFING, ColorgateOracle, Gallery,
                     OracleSession, OracleSpec, PipelineVerdict,
                     build_oracle, parse_oracle_spec)
from .pso import PsoConfig, optimize
from .attack import (AttackConfig, AttackRecord, AttackVariant, attack_one,
                     colorize_and_transform)
from .universal import ColorCluster, cluster_filters, evaluate_universal
from .defense import (ColorAtConfig, DefenseMetrics, ToyClassifier, auc,
                      defense_metrics, train_colorat, train_plain)
from .harness import (Manifest, ManifestEntry, MetricsReport, compute_metrics,
                      emit_report, generate_synthetic, load_manifest,
                      run_batch)

__version__ = "0.1.0"
