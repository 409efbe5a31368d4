"""Black-box classifier gateway.

A model manifest is a JSON file::

    {
      "name": "my-network",
      "input_side": 224,
      "normalization": {"mean": [0.485, 0.456, 0.406], "scale": [0.229, 0.224, 0.225]},
      "class_names": ["Normal", "OSCC"],
      "backend": {"toy": {"channel": "R", "tau": 0.5, "s": 10}}
    }

``backend`` holds exactly one of ``toy``, ``external`` (a command line, string or
list) or ``exchange_file`` (path to an ONNX file, relative to the manifest).

External predictor protocol: newline-delimited JSON over the child's stdin/stdout.
Request ``{"seq": n, "shape": [N, side, side, 3], "data_b64": "<raw RGB bytes>"}``,
response ``{"seq": n, "probs": [[p_normal, p_oscc], ...]}``. The gateway sends an
empty batch (``N = 0``) at load time as a handshake.
"""

import base64
import itertools
import json
import math
import shlex
import subprocess
import sys
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BackendFailure, BackendUnavailable, ManifestError, ShapeError
from .imaging import Raster

CHANNELS = {"R": 0, "G": 1, "B": 2}


@dataclass(frozen=True)
class ToySpec:
    channel: str = "R"
    tau: float = 0.5
    s: float = 10.0

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ManifestError(f"toy channel must be one of R, G, B, got {self.channel!r}")
        if not (0.0 <= self.tau <= 1.0):
            raise ManifestError(f"toy tau must lie in [0, 1], got {self.tau}")
        if not (self.s > 0):
            raise ManifestError(f"toy steepness must be > 0, got {self.s}")


@dataclass(frozen=True)
class ModelManifest:
    name: str
    backend: dict
    input_side: int = 224
    mean: tuple = (0.0, 0.0, 0.0)
    scale: tuple = (1.0, 1.0, 1.0)
    class_names: tuple = ("Normal", "OSCC")
    base_dir: Path = field(default=Path("."), compare=False)

    @classmethod
    def from_dict(cls, doc, base_dir=Path(".")):
        if not isinstance(doc, dict):
            raise ManifestError("model manifest must be a JSON object")
        try:
            name = str(doc["name"])
            backend = doc["backend"]
        except KeyError as exc:
            raise ManifestError(f"model manifest missing {exc.args[0]!r}") from None
        class_names = tuple(doc.get("class_names", ("Normal", "OSCC")))
        if len(class_names) != 2:
            raise ManifestError(f"binary task needs exactly 2 class names, got {len(class_names)}")
        side = doc.get("input_side", 224)
        if not isinstance(side, int) or side < 1:
            raise ManifestError(f"input_side must be a positive integer, got {side!r}")
        norm = doc.get("normalization", {})
        mean = tuple(float(v) for v in norm.get("mean", (0.0, 0.0, 0.0)))
        scale = tuple(float(v) for v in norm.get("scale", (1.0, 1.0, 1.0)))
        if len(mean) != 3 or len(scale) != 3:
            raise ManifestError("normalization mean and scale must be RGB triples")
        if any(v == 0 for v in scale):
            raise ManifestError("normalization scale components must be nonzero")
        if not isinstance(backend, dict) or len(backend) != 1:
            raise ManifestError("backend must name exactly one of toy, external, exchange_file")
        kind = next(iter(backend))
        if kind not in ("toy", "external", "exchange_file"):
            raise ManifestError(f"unknown backend {kind!r}")
        return cls(name=name, backend=backend, input_side=side, mean=mean, scale=scale,
                   class_names=class_names, base_dir=Path(base_dir))

    @property
    def kind(self):
        return next(iter(self.backend))


def normalize_scores(scores):
    """Coerce backend output to a row-stochastic ``(N, 2)`` matrix.

    One column is read as a logit for the positive class. Two non-negative columns
    are divided by their row sum; two columns with negative entries are treated as
    logits and soft-maxed.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim == 1:
        scores = scores[:, None]
    if scores.ndim != 2 or scores.shape[1] not in (1, 2):
        raise BackendFailure(f"backend returned scores of shape {scores.shape}, expected (N, 1) or (N, 2)")
    if not np.all(np.isfinite(scores)):
        raise BackendFailure("backend returned non-finite scores")
    if scores.shape[1] == 1:
        p = 1.0 / (1.0 + np.exp(-scores[:, 0]))
        return np.stack([1.0 - p, p], axis=1)
    if np.any(scores < 0):
        shifted = np.exp(scores - scores.max(axis=1, keepdims=True))
        return shifted / shifted.sum(axis=1, keepdims=True)
    sums = scores.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise BackendFailure("backend returned an all-zero probability row")
    return scores / sums


class Classifier:
    """Base handle; subclasses implement :meth:`_predict_array` on ``(N, H, W, 3)`` uint8."""

    def __init__(self, manifest):
        self.manifest = manifest

    @property
    def name(self):
        return self.manifest.name

    @property
    def input_side(self):
        return self.manifest.input_side

    def predict(self, batch):
        """Class probabilities for a list of rasters, one row per image."""
        side = self.input_side
        for i, img in enumerate(batch):
            if img.width != side or img.height != side:
                raise ShapeError(f"image {i} is {img.width}x{img.height}, model expects {side}x{side}")
        if not batch:
            return np.zeros((0, 2))
        return self.predict_array(np.stack([img.pixels for img in batch]))

    def predict_array(self, arr):
        arr = np.asarray(arr)
        side = self.input_side
        if arr.ndim != 4 or arr.shape[1:] != (side, side, 3):
            raise ShapeError(f"batch shape {arr.shape} does not match (N, {side}, {side}, 3)")
        if arr.shape[0] == 0:
            return np.zeros((0, 2))
        return self._predict_array(arr.astype(np.uint8, copy=False))

    def normalized(self, arr):
        mean = np.asarray(self.manifest.mean, dtype=np.float32)
        scale = np.asarray(self.manifest.scale, dtype=np.float32)
        return (arr.astype(np.float32) / 255.0 - mean) / scale

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def toy_predict_scalar(spec, img):
    """p(OSCC) = 1 / (1 + exp(-s * (mu - tau))), mu the selected channel's mean in [0, 1]."""
    px = img.pixels if isinstance(img, Raster) else np.asarray(img)
    total = int(px[:, :, CHANNELS[spec.channel]].sum(dtype=np.int64))
    mu = total / (px.shape[0] * px.shape[1] * 255)
    return 1.0 / (1.0 + math.exp(-spec.s * (mu - spec.tau)))


class ToyClassifier(Classifier):
    """Logistic on the mean of one color channel; batch rows are computed image by image."""

    def __init__(self, manifest, spec):
        super().__init__(manifest)
        self.spec = spec

    def _predict_array(self, arr):
        c = CHANNELS[self.spec.channel]
        totals = arr[:, :, :, c].sum(axis=(1, 2), dtype=np.int64)
        n = arr.shape[1] * arr.shape[2] * 255
        p = np.array([1.0 / (1.0 + math.exp(-self.spec.s * (int(t) / n - self.spec.tau))) for t in totals])
        return np.stack([1.0 - p, p], axis=1)


def make_toy(channel="R", tau=0.5, s=10.0, input_side=224, name="toy"):
    spec = ToySpec(channel, float(tau), float(s))
    manifest = ModelManifest(name=name, backend={"toy": {"channel": channel, "tau": tau, "s": s}},
                             input_side=input_side)
    return ToyClassifier(manifest, spec)


class ExternalClassifier(Classifier):
    """Child process speaking the newline-delimited JSON protocol.

    Requests are serialized through one lock, so a handle can be shared between
    threads; each response must echo the request's sequence number.
    """

    def __init__(self, manifest, command, startup_timeout=30.0):
        super().__init__(manifest)
        self.command = command
        self._lock = threading.Lock()
        self._seq = itertools.count()
        try:
            self._proc = subprocess.Popen(command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                          cwd=manifest.base_dir, text=True, bufsize=1)
        except OSError as exc:
            raise BackendUnavailable(f"cannot start external predictor {command!r}: {exc}") from exc
        try:
            self._request(np.zeros((0, self.input_side, self.input_side, 3), dtype=np.uint8))
        except BackendFailure as exc:
            self.close()
            raise BackendUnavailable(f"external predictor failed the handshake: {exc}") from exc

    def _request(self, arr):
        with self._lock:
            seq = next(self._seq)
            payload = {
                "seq": seq,
                "shape": list(arr.shape),
                "data_b64": base64.b64encode(np.ascontiguousarray(arr).tobytes()).decode("ascii"),
            }
            try:
                self._proc.stdin.write(json.dumps(payload) + "\n")
                self._proc.stdin.flush()
                line = self._proc.stdout.readline()
            except (BrokenPipeError, OSError, ValueError) as exc:
                raise BackendFailure(f"external predictor pipe closed: {exc}") from exc
        if not line:
            raise BackendFailure(f"external predictor exited (code {self._proc.poll()})")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BackendFailure(f"malformed response line: {line[:80]!r}") from exc
        if not isinstance(reply, dict) or reply.get("seq") != seq or "probs" not in reply:
            raise BackendFailure(f"response does not answer request {seq}: {line[:80]!r}")
        probs = reply["probs"]
        if not isinstance(probs, list) or len(probs) != arr.shape[0]:
            raise BackendFailure(f"expected {arr.shape[0]} probability rows")
        if not probs:
            return np.zeros((0, 2))
        try:
            return normalize_scores(probs)
        except (TypeError, ValueError) as exc:
            raise BackendFailure(f"unparseable probability rows: {exc}") from exc

    def _predict_array(self, arr):
        return self._request(arr)

    def close(self):
        proc = getattr(self, "_proc", None)
        if proc is None or proc.poll() is not None:
            return
        try:
            proc.stdin.close()
            proc.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()


class ExchangeFileClassifier(Classifier):
    """ONNX network run through onnxruntime (optional dependency).

    The graph's first input must accept float32 ``(N, side, side, 3)`` or
    ``(N, 3, side, side)`` tensors of normalized pixels; its first output is
    read as probabilities or logits.
    """

    def __init__(self, manifest, path):
        super().__init__(manifest)
        try:
            import onnxruntime
        except ImportError as exc:
            raise BackendUnavailable("exchange_file backend needs the onnxruntime package") from exc
        try:
            opts = onnxruntime.SessionOptions()
            opts.intra_op_num_threads = 1
            opts.inter_op_num_threads = 1
            self._session = onnxruntime.InferenceSession(str(path), sess_options=opts,
                                                         providers=["CPUExecutionProvider"])
        except Exception as exc:  # onnxruntime raises its own untyped errors
            raise BackendUnavailable(f"cannot open exchange file {path}: {exc}") from exc
        inp = self._session.get_inputs()[0]
        self._input_name = inp.name
        shape = inp.shape
        self._channels_first = len(shape) == 4 and shape[1] == 3 and shape[3] != 3
        self._lock = threading.Lock()

    def _predict_array(self, arr):
        x = self.normalized(arr)
        if self._channels_first:
            x = np.ascontiguousarray(x.transpose(0, 3, 1, 2))
        try:
            with self._lock:
                out = self._session.run(None, {self._input_name: x})[0]
        except Exception as exc:
            raise BackendFailure(f"exchange-file inference failed: {exc}") from exc
        return normalize_scores(np.asarray(out).reshape(arr.shape[0], -1))


def build_classifier(manifest):
    kind = manifest.kind
    cfg = manifest.backend[kind]
    if kind == "toy":
        if not isinstance(cfg, dict):
            raise ManifestError("toy backend needs {channel, tau, s}")
        try:
            spec = ToySpec(str(cfg.get("channel", "R")), float(cfg.get("tau", 0.5)), float(cfg.get("s", 10.0)))
        except (TypeError, ValueError) as exc:
            raise ManifestError(f"bad toy spec: {exc}") from exc
        return ToyClassifier(manifest, spec)
    if kind == "external":
        command = shlex.split(cfg) if isinstance(cfg, str) else [str(c) for c in cfg]
        if not command:
            raise ManifestError("external backend needs a command line")
        if command[0] in ("python", "python3"):
            command[0] = sys.executable
        return ExternalClassifier(manifest, command)
    path = Path(cfg)
    if not path.is_absolute():
        path = manifest.base_dir / path
    if not path.is_file():
        raise BackendUnavailable(f"exchange file {path} is not readable")
    return ExchangeFileClassifier(manifest, path)


def load_model(manifest_path):
    manifest_path = Path(manifest_path)
    try:
        text = manifest_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read model manifest {manifest_path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"model manifest line {exc.lineno}: {exc.msg}") from exc
    return build_classifier(ModelManifest.from_dict(doc, base_dir=manifest_path.parent))


def predict(classifier, batch):
    return classifier.predict(batch)


def serve(predict_fn, stdin=None, stdout=None):
    """Run the external-predictor side of the protocol until stdin closes.

    ``predict_fn`` receives a uint8 array ``(N, H, W, 3)`` and returns an
    ``(N, 2)`` (or ``(N, 1)`` logit) array. Wraps any framework's model in a few lines::

        if __name__ == "__main__":
            serve(lambda batch: model(preprocess(batch)))
    """
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        req = json.loads(line)
        shape = tuple(req["shape"])
        arr = np.frombuffer(base64.b64decode(req["data_b64"]), dtype=np.uint8).reshape(shape)
        probs = [] if shape[0] == 0 else np.asarray(predict_fn(arr), dtype=np.float64).tolist()
        stdout.write(json.dumps({"seq": req["seq"], "probs": probs}) + "\n")
        stdout.flush()
