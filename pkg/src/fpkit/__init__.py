"""fpkit: fingerprint matchers, quality measures, and evaluation tooling."""

from .config import RunConfig, load_config
from .errors import (ConfigError, EmptyForegroundError, ImageFormatError,
                     InsufficientOverlapError, ManifestError)
from .evaluation import (DatasetManifest, DetCurve, ManifestEntry, PairScore,
                         QualityGroupReport, ScoreSet, compute_eer,
                         enumerate_pairs, load_manifest, per_group_report,
                         rank_fingers_by_quality, run_matchers, run_protocol,
                         split_quality_groups, validate_manifest)
from .image import BlockGrid, GrayImage, load_image, normalize_intensity, save_image
from .minutiae import (MatchParams, Minutia, MinutiaeTemplate, extract_minutiae,
                       load_template, match_minutiae, normalize_minutiae_score,
                       save_template)
from .preprocessing import (ForegroundMask, OrientationField, Skeleton,
                            binarize_and_thin, estimate_orientation,
                            estimate_ridge_frequency, segment, thin)
from .quality import (QualityScore, energy_concentration_score, global_quality,
                      ingest_external_quality, local_quality, pair_quality,
                      ring_band_energies)
from .ridge import (GaborBank, RidgeFeatureMap, RidgeParams, align_by_correlation,
                    extract_ridge_features, load_feature_map, match_ridge,
                    normalize_ridge_score, save_feature_map, verify_ridge)
from .synth import (CorpusImage, DegradeSpec, SynthParams, degrade, degrade_ladder,
                    generate_fingerprint, make_corpus, write_corpus)

__version__ = "0.1.0"
