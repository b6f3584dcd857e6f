"""Leave-one-home-out experiments and accuracy / entropy table reporting."""

from __future__ import annotations

import json
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bayes.network import BnnModel, Standardizer, init_model
from .bayes.training import predicted_class, train
from .bayes.uncertainty import PredictiveDistribution, predict
from .errors import ConfigError, CsiUqError
from .features import FeatureMatrix, featurize, read_features_csv
from .preprocess import PreprocessParams, preprocess_pipeline
from .synth import Label, MotionScenario, make_home, redraw_motion, synth_csi

log = logging.getLogger(__name__)


def derive_seeds(*key, n=3) -> list[int]:
    """Independent integer seeds from a key of ints/strings."""
    ints = [zlib.crc32(k.encode()) if isinstance(k, str) else int(k) for k in key]
    return [int(s) for s in np.random.SeedSequence(ints).generate_state(n)]


@dataclass
class SyntheticHomeSpec:
    home_id: str
    seed: int | None = None  # None: derived from the experiment's master seed
    regime: str = "in"
    n_motion: int = 10
    n_static: int = 10
    duration_s: float = 60.0
    n_tx: int = 1
    n_rx: int = 2
    n_subcarriers: int = 56
    noise_ratio: float | None = None  # None: the regime's default

    def channel(self, seed: int):
        return make_home(self.home_id, seed, regime=self.regime, n_tx=self.n_tx,
                         n_rx=self.n_rx, n_subcarriers=self.n_subcarriers,
                         noise_ratio=self.noise_ratio)


@dataclass
class HomeDataset:
    home_id: str
    features: FeatureMatrix
    provenance: str
    test_only: bool = False
    single_class: bool = False

    def __post_init__(self):
        classes = set(np.unique(self.features.labels).tolist())
        if len(classes) < 2 and not self.single_class:
            raise ConfigError(f"home {self.home_id} has only classes {sorted(classes)}")


def synthesize_recordings(spec: SyntheticHomeSpec, seed: int):
    """Yield ``(label, recording_seed, CsiTensor)`` for every recording of a home."""
    base = spec.channel(seed)
    plan = [Label.MOTION] * spec.n_motion + [Label.NO_MOTION] * spec.n_static
    for r, label in enumerate(plan):
        rec_seed = derive_seeds(seed, spec.home_id, r, n=1)[0]
        cfg = redraw_motion(base, rec_seed) if label is Label.MOTION else base
        scenario = MotionScenario(label, spec.duration_s, spec.home_id)
        yield label, rec_seed, synth_csi(cfg, scenario, rec_seed)


def build_synthetic_home(
    spec: SyntheticHomeSpec,
    seed: int,
    *,
    window_len: int = 200,
    hop: int = 100,
    params: PreprocessParams | None = None,
    test_only: bool = False,
) -> HomeDataset:
    parts = []
    for label, _, tensor in synthesize_recordings(spec, seed):
        series = preprocess_pipeline(tensor, params)
        parts.append(featurize(series, window_len, hop, label, spec.home_id))
    fm = FeatureMatrix.concat(parts)
    return HomeDataset(spec.home_id, fm, f"synthetic:{spec.channel(seed).digest()}", test_only)


@dataclass
class Split:
    train: FeatureMatrix
    test: FeatureMatrix
    standardizer: Standardizer
    train_homes: list[str]


def loho_split(homes: list[HomeDataset], test_home: str) -> Split:
    """Hold out ``test_home``; train on every other home not flagged test-only.

    The standardizer is fitted on the training rows only.
    """
    ids = [h.home_id for h in homes]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate home ids in {ids}")
    if test_home not in ids:
        raise ConfigError(f"unknown home id {test_home!r}; have {ids}")
    if len(homes) < 2:
        raise ConfigError("leave-one-home-out needs at least 2 homes")
    test = next(h for h in homes if h.home_id == test_home)
    train_homes = [h for h in homes if h.home_id != test_home and not h.test_only]
    if not train_homes:
        raise ConfigError(f"no training homes remain when testing on {test_home}")
    train_fm = FeatureMatrix.concat(h.features for h in train_homes)
    return Split(train_fm, test.features, Standardizer.fit(train_fm.X),
                 [h.home_id for h in train_homes])


@dataclass
class ExampleRecord:
    true_label: int
    predicted_label: int
    samples: list  # T x n_classes sampled probability vectors
    predictive_bits: float
    aleatoric_bits: float
    epistemic_bits: float


@dataclass
class HomeMetrics:
    home_id: str
    accuracy_pct: float
    mean_entropy_no_motion: float
    mean_entropy_motion: float
    n_examples: int = 0
    mean_predictive_bits: float = float("nan")
    mean_aleatoric_no_motion: float = float("nan")
    mean_aleatoric_motion: float = float("nan")
    mean_epistemic_no_motion: float = float("nan")
    mean_epistemic_motion: float = float("nan")
    records: list[ExampleRecord] = field(default_factory=list)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("records")
        return d


def _class_mean(values, labels, cls):
    sel = labels == cls
    return float(np.mean(values[sel])) if np.any(sel) else float("nan")


def metrics_from_samples(home_id: str, samples, labels, *, keep_records=True) -> HomeMetrics:
    """Accuracy and per-true-class mean entropies from ``(N, T, C)`` samples."""
    pd = PredictiveDistribution(samples)
    labels = np.asarray(labels, dtype=int)
    pred = predicted_class(pd.mean_probs)
    H, A, E = pd.predictive_bits, pd.aleatoric_bits, pd.epistemic_bits
    records = []
    if keep_records:
        for i in range(len(labels)):
            records.append(ExampleRecord(int(labels[i]), int(pred[i]), pd.samples[i].tolist(),
                                         float(H[i]), float(A[i]), float(E[i])))
    return HomeMetrics(
        home_id=home_id,
        accuracy_pct=100.0 * float(np.mean(pred == labels)),
        mean_entropy_no_motion=_class_mean(H, labels, 0),
        mean_entropy_motion=_class_mean(H, labels, 1),
        n_examples=int(len(labels)),
        mean_predictive_bits=float(np.mean(H)),
        mean_aleatoric_no_motion=_class_mean(A, labels, 0),
        mean_aleatoric_motion=_class_mean(A, labels, 1),
        mean_epistemic_no_motion=_class_mean(E, labels, 0),
        mean_epistemic_motion=_class_mean(E, labels, 1),
        records=records,
    )


def evaluate(model: BnnModel, test: FeatureMatrix, T: int = 100, seed: int = 0,
             home_id: str | None = None, keep_records: bool = True) -> HomeMetrics:
    """Predict ``T`` samples per test row and summarize.

    Accuracy uses the argmax of the mean probabilities (ties go to no
    motion); per-class entropy groups examples by their true label.
    """
    if len(test) == 0:
        raise ConfigError("empty test set")
    pd = predict(model, test.X, T=T, seed=seed)
    hid = home_id if home_id is not None else str(test.home_ids[0])
    return metrics_from_samples(hid, pd.samples, test.labels, keep_records=keep_records)


# -- experiment configuration -------------------------------------------------


@dataclass
class HomeEntry:
    synthetic: SyntheticHomeSpec | None = None
    features_csv: str | None = None
    home_id: str | None = None
    test_only: bool = False


@dataclass
class ExperimentConfig:
    homes: list[HomeEntry]
    window_len: int = 200
    hop: int = 100
    epochs: int = 200
    batch_size: int = 4
    lr: float = 0.01
    T: int = 100
    master_seed: int = 0
    keep_records: bool = True

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path = ".") -> "ExperimentConfig":
        known = {"homes", "window_len", "hop", "epochs", "batch_size", "lr", "T",
                 "master_seed", "keep_records"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown experiment config keys: {sorted(unknown)}")
        if "homes" not in d or not isinstance(d["homes"], list):
            raise ConfigError("experiment config needs a 'homes' list")
        homes = []
        for item in d["homes"]:
            if isinstance(item, str):
                homes.append(HomeEntry(features_csv=str(Path(base_dir) / item)))
            elif "synthetic" in item:
                homes.append(HomeEntry(synthetic=SyntheticHomeSpec(**item["synthetic"]),
                                       test_only=bool(item.get("test_only", False))))
            elif "features_csv" in item:
                homes.append(HomeEntry(features_csv=str(Path(base_dir) / item["features_csv"]),
                                       home_id=item.get("home_id"),
                                       test_only=bool(item.get("test_only", False))))
            else:
                raise ConfigError(f"cannot interpret home entry {item!r}")
        rest = {k: v for k, v in d.items() if k != "homes"}
        cfg = cls(homes=homes, **rest)
        if cfg.window_len < 8 or cfg.hop < 1 or cfg.epochs < 0 or cfg.batch_size < 1 or cfg.T < 1:
            raise ConfigError("invalid window_len/hop/epochs/batch_size/T")
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.parent)


def load_homes(cfg: ExperimentConfig) -> list[HomeDataset]:
    homes = []
    for entry in cfg.homes:
        if entry.synthetic is not None:
            spec = entry.synthetic
            seed = spec.seed if spec.seed is not None else derive_seeds(cfg.master_seed, spec.home_id, n=1)[0]
            homes.append(build_synthetic_home(spec, seed, window_len=cfg.window_len, hop=cfg.hop,
                                              test_only=entry.test_only))
        else:
            fm = read_features_csv(entry.features_csv)
            ids = sorted(set(fm.home_ids.tolist()))
            hid = entry.home_id or (ids[0] if len(ids) == 1 else Path(entry.features_csv).stem)
            homes.append(HomeDataset(hid, fm, f"file:{entry.features_csv}", entry.test_only))
    return sorted(homes, key=lambda h: h.home_id)


@dataclass
class FoldResult:
    test_home: str
    status: str  # "ok" or "failed"
    train_homes: list[str]
    metrics: HomeMetrics | None = None
    error: str | None = None
    history: list = field(default_factory=list)


@dataclass
class ExperimentReport:
    folds: list[FoldResult]
    master_seed: int = 0
    note: str = (
        "Table entropies are predictive entropies (bits) of the mean sampled "
        "probabilities, grouped by true class. The aleatoric/epistemic split "
        "(expected entropy / mutual information) is an extension."
    )

    def table_rows(self):
        return [
            (f.test_home, f.metrics.accuracy_pct, f.metrics.mean_entropy_no_motion,
             f.metrics.mean_entropy_motion) if f.status == "ok" else (f.test_home, None, None, None)
            for f in self.folds
        ]


def run_fold(homes, test_home, cfg: ExperimentConfig) -> FoldResult:
    split = loho_split(homes, test_home)
    init_seed, train_seed, pred_seed = derive_seeds(cfg.master_seed, test_home)
    model = init_model(init_seed)
    try:
        model, history = train(model, split.train.X, split.train.labels, epochs=cfg.epochs,
                               batch_size=cfg.batch_size, seed=train_seed, lr=cfg.lr,
                               standardizer=split.standardizer)
    except CsiUqError as err:
        log.warning("fold %s failed: %s", test_home, err)
        hist = getattr(err, "history", None) or []
        return FoldResult(test_home, "failed", split.train_homes, error=str(err),
                          history=[asdict(h) for h in hist])
    metrics = evaluate(model, split.test, T=cfg.T, seed=pred_seed, home_id=test_home,
                       keep_records=cfg.keep_records)
    return FoldResult(test_home, "ok", split.train_homes, metrics,
                      history=[asdict(h) for h in history])


def run_experiment(cfg: ExperimentConfig, homes: list[HomeDataset] | None = None) -> ExperimentReport:
    """Run every leave-one-home-out fold; failed folds are kept in the report."""
    homes = homes if homes is not None else load_homes(cfg)
    if len(homes) < 2:
        raise ConfigError("experiment needs at least 2 homes")
    folds = [run_fold(homes, h.home_id, cfg) for h in sorted(homes, key=lambda h: h.home_id)]
    return ExperimentReport(folds, cfg.master_seed)


# -- report serialization -----------------------------------------------------


def _fmt(v, digits=2):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "n/a"
    return f"{v:.{digits}f}"


def format_table(rows) -> str:
    """Markdown table: test home, accuracy and per-class mean entropy.

    ``rows`` holds ``(home, accuracy_pct, H_no_motion, H_motion)``; a row whose
    accuracy is ``None`` is rendered as a failed fold.
    """
    lines = [
        "| Test home | Accuracy (%) | H̄(No-motion) | H̄(Motion) |",
        "|---|---|---|---|",
    ]
    for home, acc, h0, h1 in rows:
        if acc is None:
            lines.append(f"| {home} | failed | n/a | n/a |")
        else:
            lines.append(f"| {home} | {_fmt(acc)} | {_fmt(h0)} | {_fmt(h1)} |")
    return "\n".join(lines) + "\n"


def _nan_to_none(obj):
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    return obj


def _none_to_nan(obj):
    return float("nan") if obj is None else obj


def report_to_dict(report: ExperimentReport) -> dict:
    return _nan_to_none({
        "master_seed": report.master_seed,
        "note": report.note,
        "folds": [asdict(f) for f in report.folds],
    })


def metrics_from_dict(d: dict) -> HomeMetrics:
    d = dict(d)
    records = [ExampleRecord(**r) for r in d.pop("records", [])]
    for k, v in list(d.items()):
        if k != "home_id" and k != "n_examples":
            d[k] = _none_to_nan(v)
    return HomeMetrics(**d, records=records)


def report_from_dict(d: dict) -> ExperimentReport:
    folds = []
    for f in d["folds"]:
        f = dict(f)
        if f.get("metrics") is not None:
            f["metrics"] = metrics_from_dict(f["metrics"])
        folds.append(FoldResult(**f))
    return ExperimentReport(folds, d.get("master_seed", 0), d.get("note", ExperimentReport.note))


def write_report(report: ExperimentReport, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    md = out / "report.md"
    js = out / "report.json"
    md.write_text(format_table(report.table_rows()))
    js.write_text(json.dumps(report_to_dict(report), indent=1, sort_keys=True) + "\n")
    return md, js
