"""Inter-ocular-normalized error metrics and run comparison.

The reported number is the normalized mean error (NME): per image, the
mean over landmarks of the Euclidean point error divided by the
inter-ocular distance; per dataset, the mean of the per-image values,
in percent.  A single landmark with point error e therefore
contributes e/d to the metric while contributing e^2/(2 d^2) to the
training loss, so metric = sqrt(2 * E * d^2) / d for that landmark.
"""

import csv
import hashlib
from dataclasses import dataclass

import numpy as np

from . import data as D
from . import network as N
from . import tensor as T
from .errors import ConfigurationError, DataError, UsageError

REPORT_SCHEMA_VERSION = 1

# Reference full-scale mean errors (%) for the two training algorithms
# on the public benchmarks; some baseline figures in the literature are
# quoted from later papers.  Desk-scale synthetic runs are not expected
# to reproduce these.
REFERENCE_MEAN_ERRORS = {
    "cft": {"cofw_29": 6.33, "helen_194": 4.86, "300w_full": 5.85},
    "dt": {"cofw_29": 6.75, "helen_194": 5.32, "300w_full": 6.26},
}


def normalized_mean_error(pred_points, truth_points, d):
    """Mean over landmarks of point error / d (a fraction, not percent)."""
    if d <= 0:
        raise DataError("inter-ocular distance must be positive, got %r" % (d,))
    pred = np.asarray(pred_points, dtype=np.float64)
    truth = np.asarray(truth_points, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 2 or pred.shape[1] != 2:
        raise ConfigurationError("landmark arrays must share an (L, 2) shape, got %s and %s"
                                 % (pred.shape, truth.shape))
    return float(np.mean(np.hypot(*(pred - truth).T)) / d)


@dataclass
class EvalReport:
    dataset_id: str
    n_images: int
    aggregate_pct: float
    principal_pct: float
    elaborate_pct: float
    per_landmark_pct: list
    per_image: list  # (name, nme_pct)
    failures: list  # names over the threshold
    failure_threshold_pct: float = 10.0

    def summary(self):
        lines = [
            "dataset %s  (%d images)" % (self.dataset_id, self.n_images),
            "mean error            %8.2f %%" % self.aggregate_pct,
            "  principal subset    %8.2f %%" % self.principal_pct,
            "  elaborate subset    %8.2f %%" % self.elaborate_pct if not np.isnan(
                self.elaborate_pct) else "  elaborate subset        (none)",
            "failures > %.0f%%       %8d" % (self.failure_threshold_pct, len(self.failures)),
        ]
        return "\n".join(lines)

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["schema_version", REPORT_SCHEMA_VERSION])
            w.writerow(["dataset_id", self.dataset_id])
            w.writerow(["n_images", self.n_images])
            w.writerow(["aggregate_pct", "%.6f" % self.aggregate_pct])
            w.writerow(["principal_pct", "%.6f" % self.principal_pct])
            w.writerow(["elaborate_pct", "%.6f" % self.elaborate_pct])
            w.writerow(["failure_threshold_pct", "%.6f" % self.failure_threshold_pct])
            w.writerow(["per_landmark_pct"] + ["%.6f" % v for v in self.per_landmark_pct])
            w.writerow(["image", "nme_pct"])
            for name, v in self.per_image:
                w.writerow([name, "%.6f" % v])

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        fields = {}
        per_image = []
        per_landmark = []
        in_images = False
        for row in rows:
            if not row:
                continue
            if in_images:
                per_image.append((row[0], float(row[1])))
            elif row[0] == "per_landmark_pct":
                per_landmark = [float(v) for v in row[1:]]
            elif row[0] == "image":
                in_images = True
            else:
                fields[row[0]] = row[1]
        if int(fields.get("schema_version", -1)) != REPORT_SCHEMA_VERSION:
            raise ConfigurationError("report %s has schema version %s, expected %d"
                                     % (path, fields.get("schema_version"), REPORT_SCHEMA_VERSION))
        agg = float(fields["aggregate_pct"])
        thr = float(fields["failure_threshold_pct"])
        return cls(
            dataset_id=fields["dataset_id"], n_images=int(fields["n_images"]),
            aggregate_pct=agg, principal_pct=float(fields["principal_pct"]),
            elaborate_pct=float(fields["elaborate_pct"]), per_landmark_pct=per_landmark,
            per_image=per_image, failures=[n for n, v in per_image if v > thr],
            failure_threshold_pct=thr)


def dataset_identity(names, truth_points):
    """Stable fingerprint of the evaluation set (order-independent)."""
    h = hashlib.sha256()
    for name, pts in sorted(zip(names, truth_points)):
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(pts, dtype=np.float64).tobytes())
    return h.hexdigest()[:12]


def predict_landmarks(net, encoded, batch_size=64):
    """Infer-mode predictions decoded to the pixel frame; returns a list
    of (L, 2) arrays aligned with the dataset order."""
    scheme = encoded.scheme
    if scheme.n_landmarks != net.config.n_landmarks:
        raise ConfigurationError("network predicts %d landmarks but dataset has %d"
                                 % (net.config.n_landmarks, scheme.n_landmarks))
    if tuple(scheme.principal) != tuple(net.config.principal_indices):
        raise ConfigurationError("network principal indices do not match the dataset scheme")
    preds = []
    for s in range(0, encoded.n, batch_size):
        sl = slice(s, min(s + batch_size, encoded.n))
        pairs = N.forward(net, T.Tensor(encoded.x[sl]), "infer")
        pb, pe = pairs[3]  # the final head pair is the prediction
        for row in range(pb.shape[0]):
            norm = D.assemble_points(pb.data[row], pe.data[row], scheme)
            preds.append(D.denormalize_points(norm, encoded.boxes[sl.start + row]))
    return preds


def report_from_predictions(preds, encoded, failure_threshold_pct=10.0):
    """Score pixel-frame predictions against the encoded dataset truth."""
    scheme = encoded.scheme
    li, ri = scheme.interocular
    per_image = []
    per_landmark = np.zeros(scheme.n_landmarks)
    pri = list(scheme.principal)
    ela = list(scheme.elaborate)
    pri_sum = ela_sum = 0.0
    for name, pred, truth in zip(encoded.names, preds, encoded.truth_points):
        d = float(np.hypot(*(truth[li] - truth[ri])))
        errs = np.hypot(*(np.asarray(pred) - truth).T) / d
        per_image.append((name, float(errs.mean()) * 100.0))
        per_landmark += errs * 100.0
        pri_sum += errs[pri].mean() * 100.0
        if ela:
            ela_sum += errs[ela].mean() * 100.0
    n = len(per_image)
    return EvalReport(
        dataset_id=dataset_identity(encoded.names, encoded.truth_points),
        n_images=n,
        aggregate_pct=float(np.mean([v for _, v in per_image])),
        principal_pct=pri_sum / n,
        elaborate_pct=(ela_sum / n) if ela else float("nan"),
        per_landmark_pct=list(per_landmark / n),
        per_image=per_image,
        failures=[name for name, v in per_image if v > failure_threshold_pct],
        failure_threshold_pct=failure_threshold_pct)


def evaluate(net, dataset, failure_threshold_pct=10.0, input_size=None):
    """Full evaluation: encode, predict with head 4, score.

    dataset is a list of AnnotatedImage or an EncodedDataset.
    """
    if isinstance(dataset, D.EncodedDataset):
        encoded = dataset
    else:
        if not dataset:
            raise DataError("cannot evaluate an empty dataset")
        hw = input_size or net.config.input_size[:2]
        encoded = D.encode_dataset(dataset, hw)
    preds = predict_landmarks(net, encoded)
    return report_from_predictions(preds, encoded, failure_threshold_pct)


def relative_reduction(a, b):
    """(a - b) / a * 100: positive when b improves on a."""
    if a == 0:
        raise UsageError("cannot compute a relative reduction from zero")
    return (a - b) / a * 100.0


@dataclass
class ComparisonTable:
    dataset_id: str
    rows: list  # (label, a_value, b_value, reduction_pct)
    label_a: str = "a"
    label_b: str = "b"

    def render(self):
        head = "%-20s %10s %10s %12s" % ("metric", self.label_a, self.label_b, "reduction")
        lines = [head, "-" * len(head)]
        for label, va, vb, red in self.rows:
            lines.append("%-20s %9.2f%% %9.2f%% %11.2f%%" % (label, va, vb, red))
        return "\n".join(lines)

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["schema_version", REPORT_SCHEMA_VERSION])
            w.writerow(["dataset_id", self.dataset_id])
            w.writerow(["metric", self.label_a, self.label_b, "reduction_pct"])
            for label, va, vb, red in self.rows:
                w.writerow([label, "%.6f" % va, "%.6f" % vb, "%.6f" % red])


def compare_runs(report_a, report_b, label_a="a", label_b="b"):
    """Side-by-side mean errors plus relative reduction (a - b) / a.

    Both reports must describe the same dataset.
    """
    if report_a.dataset_id != report_b.dataset_id:
        raise UsageError("reports describe different datasets: %s vs %s"
                         % (report_a.dataset_id, report_b.dataset_id))
    rows = [("mean error", report_a.aggregate_pct, report_b.aggregate_pct,
             relative_reduction(report_a.aggregate_pct, report_b.aggregate_pct)),
            ("principal subset", report_a.principal_pct, report_b.principal_pct,
             relative_reduction(report_a.principal_pct, report_b.principal_pct))]
    if not (np.isnan(report_a.elaborate_pct) or np.isnan(report_b.elaborate_pct)):
        rows.append(("elaborate subset", report_a.elaborate_pct, report_b.elaborate_pct,
                     relative_reduction(report_a.elaborate_pct, report_b.elaborate_pct)))
    return ComparisonTable(report_a.dataset_id, rows, label_a, label_b)
