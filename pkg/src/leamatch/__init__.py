"""Objective bullet land comparison with a trust-calibrating examiner workbench.

Pipeline: LEA scan -> crosscut -> profile -> groove trimming -> LOWESS
signature -> aligned features -> random-forest land scores -> in-phase
bullet scores, plus a sequentially unlocked examiner session service.
"""

from .config import Config, load_config, save_config
from .scan import Bullet, SurfaceScan, load_scan, save_scan, validate_scan
from .store import ScanStore
from .pipeline import (CrosscutSelection, GrooveBounds, Profile, Signature,
                       detect_grooves, extract_profile, extract_signature,
                       lowess_fit, scan_to_signature, select_crosscut)
from .compare import (Alignment, Extremum, FeatureVector, align, cms_runs,
                      features, find_extrema, match_extrema)
from .forest import Forest, load_forest, save_forest, score_land_pair, train_forest
from .scoring import (BulletScore, PhaseResult, ScoreMatrix, best_phase,
                      bullet_score, expected_match_frame, land_matrix)
from .synth import (Barrel, Damage, Dataset, FiredBullet, FiringSpec,
                    fire_bullet, make_barrel, make_dataset, true_phase)
from .session import (AfteConclusion, ExaminerSession, add_level, create_session,
                      record_conclusion, replay, select_bullet_pair,
                      select_land_pair, set_match_frame)
from .artifacts import compute_case, load_case, payload_for_level, save_case

__version__ = "0.1.0"
