"""Dataset manifests, feature CSVs and in-memory cohorts.

A manifest is one JSON file::

    {"name": "...",
     "subjects": [{"subject_id": "s01", "phq9": 7,
                   "audio": "s01_audio.wav" | "s01_audio.csv",
                   "video": "s01_emotions.csv",
                   "gaze": "s01_gaze.csv" | {"pairs": [{"fixation": "f.csv", "saliency": "s.csv"}],
                                             "baseline": "b.csv"}}]}

Relative paths resolve against the manifest's directory. Every referenced
file must exist when the manifest is loaded.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .features import audio as audio_mod
from .features.emotion import EMOTIONS, load_emotion_features
from .features.saliency import METRIC_NAMES, SaliencyPair, metric_vector, saliency_metrics
from .features.wav import read_wav
from .model import MODALITIES
from .training import phq9_to_class


class ManifestError(ValueError):
    pass


@dataclass
class SubjectRecord:
    subject_id: str
    phq9: int
    files: dict  # modality -> Path, or for gaze possibly {"pairs": [...], "baseline": Path}


@dataclass
class DatasetManifest:
    name: str
    subjects: list
    root: Path = field(default_factory=Path)

    def __len__(self) -> int:
        return len(self.subjects)

    def missing(self, modalities: Sequence[str]) -> list:
        return [(s.subject_id, m) for s in self.subjects for m in modalities if m not in s.files]


def _resolve(root: Path, p, where: str) -> Path:
    path = Path(p)
    path = path if path.is_absolute() else root / path
    if not path.is_file():
        raise ManifestError(f"{where}: file not found: {path}")
    return path


def parse_manifest(doc: dict, root: Path) -> DatasetManifest:
    subjects = doc.get("subjects")
    if not isinstance(subjects, list) or not subjects:
        raise ManifestError("manifest has no subjects")
    seen = set()
    records = []
    for i, s in enumerate(subjects):
        sid = s.get("subject_id")
        where = f"subject #{i} ({sid!r})"
        if not isinstance(sid, str) or not sid:
            raise ManifestError(f"{where}: missing subject_id")
        if sid in seen:
            raise ManifestError(f"{where}: duplicate subject_id")
        seen.add(sid)
        score = s.get("phq9")
        if isinstance(score, bool) or not isinstance(score, int) or not 0 <= score <= 27:
            raise ManifestError(f"{where}: phq9 must be an integer in [0, 27], got {score!r}")
        avail = s.get("modalities", {})
        files = {}
        for m in MODALITIES:
            if m not in s or avail.get(m, True) is False:
                continue
            ref = s[m]
            if m == "gaze" and isinstance(ref, dict):
                pairs = ref.get("pairs") or []
                if not pairs:
                    raise ManifestError(f"{where}: gaze entry has no fixation/saliency pairs")
                files[m] = {
                    "pairs": [{"fixation": _resolve(root, p["fixation"], where),
                               "saliency": _resolve(root, p["saliency"], where)} for p in pairs],
                    "baseline": _resolve(root, ref["baseline"], where) if ref.get("baseline") else None,
                }
            else:
                files[m] = _resolve(root, ref, where)
        records.append(SubjectRecord(sid, score, files))
    return DatasetManifest(str(doc.get("name", "dataset")), records, root)


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"{path}: {exc}") from None
    return parse_manifest(doc, path.parent)


# --- CSV matrices ----------------------------------------------------------

def write_matrix_csv(path, matrix, header: Optional[Sequence[str]] = None) -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    header = list(header) if header is not None else [f"f{i}" for i in range(matrix.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in matrix:
            w.writerow([repr(float(x)) for x in row])


def read_matrix_csv(path, header: bool = True) -> tuple:
    """Return ``(matrix, column names)``. Maps without a header use ``header=False``."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    names = rows.pop(0) if header and rows else []
    try:
        mat = np.array([[float(x) for x in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry ({exc})") from None
    if rows and len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: ragged rows")
    if names and rows and len(names) != mat.shape[1]:
        raise ValueError(f"{path}: header has {len(names)} columns, data has {mat.shape[1]}")
    return mat.reshape(len(rows), -1) if rows else np.zeros((0, len(names))), names


def _read_map(path) -> np.ndarray:
    # maps may or may not carry a header line
    with open(path, newline="") as fh:
        first = next(csv.reader(fh), [])
    try:
        [float(x) for x in first]
        has_header = False
    except ValueError:
        has_header = True
    return read_matrix_csv(path, header=has_header)[0]


# --- cohorts ---------------------------------------------------------------

@dataclass
class FeatureParams:
    sample_rate: int = audio_mod.DEFAULT_SR
    window: int = audio_mod.DEFAULT_WINDOW
    hop: int = audio_mod.DEFAULT_HOP
    n_mels: int = audio_mod.DEFAULT_MELS
    n_mfcc: int = audio_mod.DEFAULT_MFCC
    saliency_sigma: float = 1.0
    saliency_splits: int = 100
    seed: int = 0


@dataclass
class Cohort:
    ids: list
    phq9: list
    features: dict  # modality -> list of (time x f) arrays
    feature_names: dict = field(default_factory=dict)
    name: str = "cohort"

    def __len__(self) -> int:
        return len(self.ids)

    def labels(self, task: str) -> np.ndarray:
        return np.array([phq9_to_class(s, task) for s in self.phq9], dtype=np.int64)

    def feature_dims(self) -> dict:
        return {m: seqs[0].shape[1] for m, seqs in self.features.items()}

    def subset(self, ids: Sequence) -> "Cohort":
        pos = {s: i for i, s in enumerate(self.ids)}
        idx = [pos[s] for s in ids]
        return Cohort([self.ids[i] for i in idx], [self.phq9[i] for i in idx],
                      {m: [v[i] for i in idx] for m, v in self.features.items()}, self.feature_names, self.name)


def gaze_sequence(ref: dict, params: FeatureParams) -> np.ndarray:
    """One row of eight comparison metrics per fixation/saliency pair."""
    fixes = [_read_map(p["fixation"]) for p in ref["pairs"]]
    rows = []
    base = _read_map(ref["baseline"]) if ref.get("baseline") else None
    for i, p in enumerate(ref["pairs"]):
        pair = SaliencyPair(fixes[i], _read_map(p["saliency"]))
        others = [f for j, f in enumerate(fixes) if j != i and f.shape == fixes[i].shape]
        rows.append(metric_vector(saliency_metrics(pair, others or None, base, params.saliency_sigma,
                                                   params.saliency_splits, params.seed)))
    return np.vstack(rows)


def extract_modality(modality: str, ref, params: FeatureParams) -> tuple:
    """Feature matrix and column names for one subject/modality reference."""
    if modality == "gaze" and isinstance(ref, dict):
        return gaze_sequence(ref, params), list(METRIC_NAMES)
    path = Path(ref)
    if modality == "audio" and path.suffix.lower() == ".wav":
        x, sr = read_wav(path, params.sample_rate)
        return audio_mod.audio_features(x, sr, params.window, params.hop, params.n_mels, params.n_mfcc)
    mat, names = read_matrix_csv(path)
    if modality == "video":
        mat = load_emotion_features(mat)
        names = names or list(EMOTIONS)
    return mat, names


def load_cohort(manifest: DatasetManifest, modalities: Sequence[str], params: Optional[FeatureParams] = None) -> Cohort:
    """Extract or read features for every subject; fails fast on any gap."""
    params = params or FeatureParams()
    gaps = manifest.missing(modalities)
    if gaps:
        sid, m = gaps[0]
        raise ManifestError(f"subject {sid!r}: no {m} data (missing modalities are not imputed); "
                            f"{len(gaps)} gap(s) in total")
    feats = {m: [] for m in modalities}
    names = {}
    for s in manifest.subjects:
        for m in modalities:
            mat, cols = extract_modality(m, s.files[m], params)
            if mat.shape[0] == 0:
                raise ManifestError(f"subject {s.subject_id!r}: empty {m} feature sequence")
            if m in names and len(cols) != len(names[m]):
                raise ManifestError(f"subject {s.subject_id!r}: {m} has {len(cols)} features, "
                                    f"expected {len(names[m])}")
            names.setdefault(m, cols)
            feats[m].append(mat)
    return Cohort([s.subject_id for s in manifest.subjects], [s.phq9 for s in manifest.subjects],
                  feats, names, manifest.name)


def write_cohort(cohort: Cohort, out_dir) -> Path:
    """Write per-subject feature CSVs plus a manifest; returns the manifest path."""
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    subjects = []
    for i, sid in enumerate(cohort.ids):
        rec = {"subject_id": sid, "phq9": int(cohort.phq9[i])}
        for m, seqs in cohort.features.items():
            rel = Path("features") / f"{sid}_{m}.csv"
            write_matrix_csv(out / rel, seqs[i], cohort.feature_names.get(m))
            rec[m] = str(rel)
        subjects.append(rec)
    path = out / "manifest.json"
    path.write_text(json.dumps({"name": cohort.name, "subjects": subjects}, indent=2))
    return path
