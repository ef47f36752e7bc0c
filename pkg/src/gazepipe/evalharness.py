"""Cross-validation driver, head-pose baseline, reports and error grids."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry as geo
from . import trainer as T
from .datamodel import FoldPlan, NormalizationConfig, SampleSet, filter_frames, load_manifest
from .network import GazeNet, ModelConfig

logger = logging.getLogger(__name__)

# Published per-subject errors (degrees) on the EYEDIAP FT sessions, subjects 1..16 then the average.
# Read-only; rendered as an external reference, never recomputed.
EXTERNAL_REFERENCE = {
    "static": {
        "Head": [23.5, 22.1, 20.3, 23.6, 23.2, 23.2, 23.6, 21.2, 26.7, 23.6, 23.1, 24.4, 23.3, 24.0, 24.5, 22.8, 23.3],
        "PR-ALR": [12.3, 12.0, 12.4, 11.3, 15.5, 12.9, 17.9, 11.8, 17.3, 13.4, 13.4, 14.3, 15.2, 13.6, 14.4, 14.6,
                   13.9],
        "MPIIGaze": [5.3, 5.1, 5.7, 4.7, 7.3, 15.1, 10.8, 5.7, 9.9, 7.1, 5.0, 5.7, 7.4, 3.8, 4.8, 5.5, 6.8],
        "Static": [3.9, 4.1, 4.2, 3.9, 6.0, 6.4, 7.2, 3.6, 7.1, 5.0, 5.7, 6.7, 3.9, 4.7, 5.1, 4.2, 5.1],
        "Temporal": [4.0, 4.9, 4.3, 4.1, 6.1, 6.5, 6.6, 3.9, 7.8, 6.1, 4.7, 5.6, 4.7, 3.5, 5.9, 4.6, 5.2],
    },
    "moving": {
        "Head": [19.3, 14.2, 16.4, 19.9, 16.8, 21.9, 16.1, 24.2, 20.3, 19.9, 18.8, 22.3, 18.1, 14.9, 16.2, 19.3, 18.7],
        "MPIIGaze": [7.6, 6.2, 5.7, 8.7, 10.1, 12.0, 12.2, 6.1, 8.3, 5.9, 6.1, 6.2, 7.4, 4.7, 4.4, 6.0, 7.3],
        "Static": [5.8, 5.7, 4.4, 7.5, 6.7, 8.8, 11.6, 5.5, 8.3, 5.5, 5.2, 6.3, 5.3, 3.9, 4.3, 5.6, 6.3],
        "Temporal": [6.1, 5.6, 4.5, 7.5, 6.4, 8.2, 12.0, 5.0, 7.5, 5.4, 5.0, 5.8, 6.6, 4.0, 4.5, 5.8, 6.2],
    },
}


def _num(x) -> str:
    return repr(float(x))


def direction_angles(v) -> np.ndarray:
    """Degrees (theta, phi) of directions pointing roughly toward the camera.

    Inverse of ``angles_to_gaze`` without the hemisphere check, for binning.
    """
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v, axis=-1, keepdims=True)
    th = np.arctan2(-v[..., 0], -v[..., 2])
    ph = np.arcsin(np.clip(-v[..., 1], -1.0, 1.0))
    return np.degrees(np.stack([th, ph], -1))


@dataclass
class EvalReport:
    """Per-frame predictions in the camera frame plus derived summaries."""

    keys: list
    pred: np.ndarray
    gt: np.ndarray
    head_H: np.ndarray | None = None
    model_id: str = ""
    fold_plan: dict | None = None
    gaze_angles: np.ndarray | None = None
    errors: np.ndarray = field(init=False)

    def __post_init__(self):
        self.keys = [tuple(k) for k in self.keys]
        self.pred = np.asarray(self.pred, dtype=float).reshape(-1, 3)
        self.gt = np.asarray(self.gt, dtype=float).reshape(-1, 3)
        if not len(self.keys) == len(self.pred) == len(self.gt):
            raise ValueError("keys, pred and gt must have the same length")
        if self.head_H is None:
            self.head_H = np.tile(np.eye(3), (len(self.keys), 1, 1))
        self.head_H = np.asarray(self.head_H, dtype=float).reshape(-1, 3, 3)
        if self.gaze_angles is None:
            self.gaze_angles = direction_angles(self.gt) if len(self.gt) else np.zeros((0, 2))
        self.gaze_angles = np.asarray(self.gaze_angles, dtype=float).reshape(-1, 2)
        self.errors = geo.angular_error(self.pred, self.gt) if len(self.gt) else np.zeros(0)

    def __len__(self):
        return len(self.keys)

    @property
    def head_angles(self) -> np.ndarray:
        return direction_angles(self.head_H @ np.array([0.0, 0.0, -1.0]))

    @property
    def overall_mean(self) -> float:
        if not len(self):
            raise ValueError("empty report")
        return float(self.errors.mean())

    def _group_means(self, keyfn) -> dict:
        groups: dict = {}
        for k, e in zip(self.keys, self.errors):
            groups.setdefault(keyfn(k), []).append(e)
        return {g: float(np.mean(v)) for g, v in sorted(groups.items())}

    def per_subject(self) -> dict:
        """{(subject, target_kind, head_kind): mean error}."""
        return self._group_means(lambda k: (k[0], k[1], k[2]))

    def condition_means(self) -> dict:
        """{(target_kind, head_kind): frame-weighted mean error}."""
        return self._group_means(lambda k: (k[1], k[2]))

    def restrict(self, keys) -> "EvalReport":
        """Report over the given keys only (order of ``keys``)."""
        idx = {k: i for i, k in enumerate(self.keys)}
        rows = [idx[tuple(k)] for k in keys]
        return EvalReport([self.keys[i] for i in rows], self.pred[rows], self.gt[rows], self.head_H[rows],
                          self.model_id, self.fold_plan, self.gaze_angles[rows])

    def write_frames(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subject", "target_kind", "head_kind", "lighting", "frame_index",
                        "pred_x", "pred_y", "pred_z", "gt_x", "gt_y", "gt_z", "error_deg",
                        "gaze_theta", "gaze_phi"] + [f"H{i}{j}" for i in range(3) for j in range(3)])
            for k, p, g, e, a, H in zip(self.keys, self.pred, self.gt, self.errors, self.gaze_angles, self.head_H):
                w.writerow([*k, *map(_num, p), *map(_num, g), _num(e), *map(_num, a), *map(_num, H.ravel())])

    @classmethod
    def read_frames(cls, path, model_id: str = "") -> "EvalReport":
        keys, pred, gt, ang, H = [], [], [], [], []
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                keys.append((r["subject"], r["target_kind"], r["head_kind"], r["lighting"], int(r["frame_index"])))
                pred.append([float(r[f"pred_{c}"]) for c in "xyz"])
                gt.append([float(r[f"gt_{c}"]) for c in "xyz"])
                ang.append([float(r["gaze_theta"]), float(r["gaze_phi"])])
                H.append([float(r[f"H{i}{j}"]) for i in range(3) for j in range(3)])
        return cls(keys, np.array(pred), np.array(gt), np.array(H), model_id, None, np.array(ang))

    def write(self, out_dir, name: str = "report") -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        frames = out / f"{name}_frames.csv"
        self.write_frames(frames)
        summary = out / f"{name}_subjects.csv"
        with open(summary, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subject", "target_kind", "head_kind", "mean_error_deg", "frames"])
            counts = {}
            for k in self.keys:
                counts[(k[0], k[1], k[2])] = counts.get((k[0], k[1], k[2]), 0) + 1
            for g, m in self.per_subject().items():
                w.writerow([*g, _num(m), counts[g]])
            w.writerow(["ALL", "", "", _num(self.overall_mean), len(self)])
        table = out / f"{name}_table.txt"
        table.write_text(format_table({self.model_id or name: self}))
        return [frames, summary, table]


def format_table(reports: dict, target_kind: str = "FT", include_reference: bool = True) -> str:
    """Text table with one column per subject and a frame-weighted average.

    Upper half static-head sessions, lower half moving-head sessions.
    """
    subjects = sorted({k[0] for r in reports.values() for k in r.keys if k[1] == target_kind})
    lines = []
    for head_kind in ("static", "moving"):
        lines.append(f"[{target_kind} / {head_kind} head]")
        lines.append(" | ".join(["Method".ljust(12), *[s.rjust(6) for s in subjects], "Avg.".rjust(6)]))
        for name, rep in reports.items():
            per = rep.per_subject()
            cells = [f"{per[(s, target_kind, head_kind)]:6.1f}" if (s, target_kind, head_kind) in per else "     -"
                     for s in subjects]
            cond = rep.condition_means().get((target_kind, head_kind))
            lines.append(" | ".join([name[:12].ljust(12), *cells, f"{cond:6.1f}" if cond is not None else "     -"]))
        lines.append("")
    if include_reference:
        lines.append("External reference (published EYEDIAP FT results, subjects 1-16 and average; not recomputed):")
        for head_kind, rows in EXTERNAL_REFERENCE.items():
            lines.append(f"[external / {head_kind} head]")
            for name, vals in rows.items():
                lines.append(" | ".join([f"{name} (external)".ljust(20), *[f"{v:5.1f}" for v in vals]]))
        lines.append("")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# baselines and prediction

def head_baseline(data, forward_sign: float = -1.0, model_id: str = "Head") -> EvalReport:
    """Gaze predicted as the head's forward axis.  ``data`` is a SampleSet or a list of FrameRecords."""
    if isinstance(data, SampleSet):
        keys, H, gt = data.keys, data.head_H, data.gaze
    else:
        from .datamodel import compute_gt_gaze

        keys = [r.key for r in data]
        H = np.array([r.head.H for r in data]).reshape(-1, 3, 3)
        gt = np.array([compute_gt_gaze(r) for r in data]).reshape(-1, 3)
    pred = H @ np.array([0.0, 0.0, forward_sign])
    return EvalReport(keys, pred, gt, H, model_id)


def static_report(model: GazeNet, data: SampleSet, rows=None, model_id: str = "Static",
                  batch_size: int = 128) -> EvalReport:
    rows = np.arange(len(data)) if rows is None else np.asarray(rows)
    angles = T.predict_static(model, data, rows, batch_size)
    return _report_from_angles(data, rows, angles, model_id)


def _report_from_angles(data: SampleSet, rows, angles, model_id) -> EvalReport:
    g_n = geo.angles_to_gaze(angles)
    pred = geo.denormalize_gaze(g_n, data.R[rows])
    return EvalReport([data.keys[i] for i in rows], pred, data.gaze[rows], data.head_H[rows], model_id)


def temporal_report(model: GazeNet, cache: T.FeatureCache, data: SampleSet, windows: np.ndarray,
                    model_id: str = "Temporal") -> EvalReport:
    """One prediction per window, attributed to the window's last frame."""
    angles = T.predict_temporal(model, cache, windows)
    return _report_from_angles(data, windows[:, -1], angles, model_id)


def comparable(static: EvalReport, temporal: EvalReport) -> tuple[EvalReport, EvalReport]:
    """Restrict both reports to the frames the temporal model predicted."""
    keys = [k for k in temporal.keys]
    return static.restrict(keys), temporal.restrict(keys)


def concat_reports(reports, model_id: str | None = None, fold_plan=None) -> EvalReport:
    reports = list(reports)
    if not reports:
        raise ValueError("no reports")
    return EvalReport(
        [k for r in reports for k in r.keys],
        np.concatenate([r.pred for r in reports]),
        np.concatenate([r.gt for r in reports]),
        np.concatenate([r.head_H for r in reports]),
        model_id if model_id is not None else reports[0].model_id,
        fold_plan,
        np.concatenate([r.gaze_angles for r in reports]),
    )


# --------------------------------------------------------------------------
# cross-validation

def load_dataset(manifest_path, intrinsics_path=None, norm_config: NormalizationConfig | None = None,
                 constraint_frame: str = "head"):
    """Load, filter and normalize a manifest.  Returns ``(SampleSet, rejected)``."""
    records = load_manifest(manifest_path, intrinsics_path)
    kept, rejected = filter_frames(records, constraint_frame, norm_config)
    return SampleSet.from_records(kept, norm_config), rejected


@dataclass
class CrossValidationResult:
    static: EvalReport
    temporal: EvalReport | None = None
    histories: list = field(default_factory=list)
    fold_subjects: list = field(default_factory=list)


def run_cross_validation(data: SampleSet, fold_plan: FoldPlan, model_config: ModelConfig,
                         train_config: T.TrainConfig, mode: str = "static", progress=None,
                         checkpoint_root=None) -> CrossValidationResult:
    """Train on out-of-fold subjects and predict the in-fold ones, fold by fold.

    In temporal mode stage 1 runs at the temporal fusion sizes, the static
    predictions are taken from that network, then stage 2 trains the
    recurrent head; both reports cover only frames with a temporal prediction.
    """
    if mode not in ("static", "temporal"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "temporal" and model_config.variant != "temporal":
        model_config = ModelConfig(**{**model_config.to_dict(), "variant": "temporal"})
    present = set(data.subjects)
    statics, temporals, histories, folds = [], [], [], []
    for fold in range(fold_plan.k):
        test = [s for s in fold_plan.subjects_in(fold) if s in present]
        pool = [s for s in fold_plan.subjects_out(fold) if s in present]
        if not pool:
            raise ValueError(f"fold {fold} has no training subjects")
        if not test:
            continue
        train_s, val_s = T.split_validation(pool, train_config.val_subjects, train_config.seed + fold)
        assert not set(test) & (set(train_s) | set(val_s)), "test subject leaked into training"
        tr = data.subset(data.rows_for_subjects(train_s))
        va = data.subset(data.rows_for_subjects(val_s)) if val_s else None
        te_rows = data.rows_for_subjects(test)
        te = data.subset(te_rows)
        cfg = train_config
        if checkpoint_root is not None:
            from dataclasses import replace

            cfg = replace(train_config, checkpoint_dir=str(Path(checkpoint_root) / f"fold{fold}"))
        logger.info("fold %d: train %s val %s test %s", fold, train_s, val_s, test)
        model, h1 = T.train_stage1(tr, va, model_config, cfg, progress=progress)
        rep_s = static_report(model, te, model_id="Static")
        fold_hist = {"fold": fold, "stage1": h1}
        if mode == "temporal":
            s = model_config.sequence_length
            tr_cache = T.build_feature_cache(model, tr)
            te_cache = T.build_feature_cache(model, te)
            va_cache = T.build_feature_cache(model, va) if va is not None else None
            model, h2 = T.train_stage2(
                model, tr_cache, tr.window_rows(s), tr.labels, cfg, va_cache,
                va.window_rows(s) if va is not None else None, va.labels if va is not None else None,
                progress=progress)
            fold_hist["stage2"] = h2
            rep_t = temporal_report(model, te_cache, te, te.window_rows(s))
            rep_s, rep_t = comparable(rep_s, rep_t)
            temporals.append(rep_t)
        statics.append(rep_s)
        histories.append(fold_hist)
        folds.append(test)
    plan = {"k": fold_plan.k, "mode": fold_plan.mode, "groups": dict(fold_plan.groups)}
    return CrossValidationResult(
        concat_reports(statics, "Static", plan),
        concat_reports(temporals, "Temporal", plan) if temporals else None,
        histories, folds)


# --------------------------------------------------------------------------
# error grids

@dataclass
class ErrorGrid:
    space: str
    bin_width: float
    x_edges: np.ndarray
    y_edges: np.ndarray
    mean: np.ndarray  # (ny, nx), NaN where empty
    count: np.ndarray  # (ny, nx)

    def write(self, path) -> None:
        """Long-format dump: one row per bin."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"{self.space}_x_lo", f"{self.space}_x_hi", f"{self.space}_y_lo", f"{self.space}_y_hi",
                        "mean_error_deg", "count"])
            for j in range(self.mean.shape[0]):
                for i in range(self.mean.shape[1]):
                    w.writerow([self.x_edges[i], self.x_edges[i + 1], self.y_edges[j], self.y_edges[j + 1],
                                "" if np.isnan(self.mean[j, i]) else _num(self.mean[j, i]), int(self.count[j, i])])


def _edges(values, width):
    lo = np.floor(values.min() / width) * width
    hi = np.floor(values.max() / width) * width + width
    return np.arange(lo, hi + width / 2, width)


def emit_error_grid(report: EvalReport, space: str = "gaze", bin_width: float = 5.0, path=None,
                    edges=None) -> ErrorGrid:
    """Per-bin mean error over gaze angles or head orientation angles."""
    if len(report) == 0:
        raise ValueError("empty report")
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    if space == "gaze":
        ang = report.gaze_angles
    elif space == "head":
        ang = report.head_angles
    else:
        raise ValueError(f"unknown space {space!r}")
    xe, ye = edges if edges is not None else (_edges(ang[:, 0], bin_width), _edges(ang[:, 1], bin_width))
    count, _, _ = np.histogram2d(ang[:, 1], ang[:, 0], bins=[ye, xe])
    total, _, _ = np.histogram2d(ang[:, 1], ang[:, 0], bins=[ye, xe], weights=report.errors)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    grid = ErrorGrid(space, bin_width, xe, ye, mean, count.astype(np.int64))
    if path is not None:
        grid.write(path)
    return grid


def difference_grid(static: EvalReport, temporal: EvalReport, space: str = "gaze", bin_width: float = 5.0,
                    path=None) -> ErrorGrid:
    """grid(static) - grid(temporal) on the shared frames; positive favours the temporal model."""
    s, t = comparable(static, temporal)
    ang = s.gaze_angles if space == "gaze" else s.head_angles
    edges = (_edges(ang[:, 0], bin_width), _edges(ang[:, 1], bin_width))
    gs = emit_error_grid(s, space, bin_width, edges=edges)
    gt = emit_error_grid(t, space, bin_width, edges=edges)
    diff = ErrorGrid(space, bin_width, gs.x_edges, gs.y_edges, gs.mean - gt.mean, gs.count)
    if path is not None:
        diff.write(path)
    return diff
