"""Zero-shot emotion classification core and the HTTP inference service.

Classification embeds each view, fuses by mean-then-renormalize, and scores
each emotion against the mean embedding of its prompt set; probabilities are
softmax(scores / 0.07). The service exposes POST /classify (multipart or JSON
base64), GET /health, and GET /models over a read-only model registry, so
concurrent requests are safe.
"""

from __future__ import annotations

import base64
import io
import json
import threading
from dataclasses import dataclass
from email import policy
from email.parser import BytesParser
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .datagen import EMOTIONS
from .dynimg import rank_pool_approx
from .encoders import ModelParams, checkpoint_id, encode_image_batch, encode_text_batch, load_checkpoint
from .errors import InvalidInputError
from .prompts import class_prompt_set, tokenize

TAU_INFER = 0.07
MAX_PAYLOAD = 16 * 1024 * 1024
MISSING_VIEWS_ERROR = "exactly three views required"
VIEW_FIELDS = ("frontal", "left", "right")


@dataclass
class ClassifyRequest:
    images: dict[str, np.ndarray]                       # view -> (H, W) in [0, 1]
    sequences: dict[str, list[np.ndarray]] | None = None
    model: str | None = None


@dataclass
class ClassifyResponse:
    probabilities: dict[str, float]
    predicted: str
    per_view_agreement: dict[str, str]
    model_id: str

    def as_dict(self) -> dict:
        return {
            "probabilities": self.probabilities,
            "predicted": self.predicted,
            "per_view_agreement": self.per_view_agreement,
            "model_id": self.model_id,
        }


def _renormalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n <= 1e-12:
        out = np.zeros_like(v)
        out[0] = 1.0
        return out
    return v / n


def class_prototypes(params: ModelParams, n_per_class: int, seed: int) -> np.ndarray:
    """(6, d) unit rows: mean text embedding of each emotion's prompt set."""
    protos = []
    for emotion in EMOTIONS:
        texts = class_prompt_set(emotion, n_per_class, seed=seed)
        Z, _ = encode_text_batch([tokenize(t) for t in texts], params)
        protos.append(_renormalize(Z.mean(axis=0)))
    return np.stack(protos)


def _softmax(scores: np.ndarray) -> np.ndarray:
    e = np.exp((scores - scores.max()) / TAU_INFER)
    return e / e.sum()


def classify_pixels(pixel_views: dict[str, np.ndarray], params: ModelParams,
                    protos: np.ndarray, model_id: str = "") -> dict:
    """Core scoring on already-decoded view pixels (1 to 3 views)."""
    names = [n for n in VIEW_FIELDS if n in pixel_views]
    Z, _ = encode_image_batch(np.stack([pixel_views[n] for n in names]), params)
    fused = _renormalize(Z.mean(axis=0))
    probs = _softmax(protos @ fused)
    per_view = {names[i]: EMOTIONS[int(np.argmax(protos @ Z[i]))] for i in range(len(names))}
    return {
        "probabilities": {e: float(probs[i]) for i, e in enumerate(EMOTIONS)},
        "predicted": EMOTIONS[int(np.argmax(probs))],
        "per_view_agreement": per_view,
        "model_id": model_id,
    }


def classify(req: ClassifyRequest, params: ModelParams, model_id: str = "",
             prompts_per_class: int = 8, prompt_seed: int = 0,
             protos: np.ndarray | None = None) -> ClassifyResponse:
    """Full request path: optional rank-pooling of per-view sequences, then scoring."""
    missing = [v for v in VIEW_FIELDS if v not in req.images]
    if missing and not (req.sequences and all(v in req.sequences for v in missing)):
        raise InvalidInputError(MISSING_VIEWS_ERROR)
    pixel_views = dict(req.images)
    if req.sequences:
        for view, frames in req.sequences.items():
            if frames:
                pixel_views[view] = rank_pool_approx(np.stack(frames))
    if any(v not in pixel_views for v in VIEW_FIELDS):
        raise InvalidInputError(MISSING_VIEWS_ERROR)
    if protos is None:
        protos = class_prototypes(params, prompts_per_class, prompt_seed)
    result = classify_pixels(pixel_views, params, protos, model_id)
    return ClassifyResponse(**result)


# ---------------------------------------------------------------------------
# HTTP service
# ---------------------------------------------------------------------------


class ModelEntry:
    def __init__(self, path: str):
        self.path = path
        self.params, self.meta = load_checkpoint(path)
        self.model_id = checkpoint_id(path)
        cfg = self.meta.get("config", {})
        self.prompt_seed = int(cfg.get("seed", self.meta.get("seed", 0)))
        self.prompts_per_class = int(cfg.get("prompts_per_class", 8))
        self.protos = class_prototypes(self.params, self.prompts_per_class, self.prompt_seed)


class ModelRegistry:
    """Immutable-after-load registry of checkpoints served read-only."""

    def __init__(self, paths: list[str]):
        self.entries: dict[str, ModelEntry] = {}
        self.default_id: str | None = None
        for p in sorted(paths):
            entry = ModelEntry(p)
            self.entries[entry.model_id] = entry
            self.default_id = self.default_id or entry.model_id

    @classmethod
    def from_dir(cls, directory: str) -> "ModelRegistry":
        return cls([str(p) for p in sorted(Path(directory).glob("*.avlm"))])

    def get(self, model_id: str | None) -> ModelEntry | None:
        if model_id is None:
            return self.entries.get(self.default_id) if self.default_id else None
        return self.entries.get(model_id)

    def describe(self) -> list[dict]:
        return [
            {
                "model_id": e.model_id,
                "engine": e.params.engine,
                "d": e.params.d,
                "file": Path(e.path).name,
            }
            for e in self.entries.values()
        ]


def _decode_png(data: bytes) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError) as e:
        raise InvalidInputError(f"undecodable image: {e}") from e
    return np.asarray(img.convert("L"), dtype=np.float64) / 255.0


def _parse_multipart(content_type: str, body: bytes) -> dict[str, bytes]:
    header = f"Content-Type: {content_type}\r\n\r\n".encode()
    msg = BytesParser(policy=policy.default).parsebytes(header + body)
    fields = {}
    for part in msg.iter_parts():
        name = part.get_param("name", header="content-disposition")
        if name:
            fields[name] = part.get_payload(decode=True)
    return fields


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    registry: ModelRegistry = None  # set by serve_http
    cors_origin = "*"

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _cors(self):
        self.send_header("Access-Control-Allow-Origin", self.cors_origin)
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _respond(self, code: int, payload: dict):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(code)
        self._cors()
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        if self.path == "/health":
            entry = self.registry.get(None)
            if entry:
                self._respond(200, {"status": "ok", "model_id": entry.model_id})
            else:
                self._respond(200, {"status": "no-model", "model_id": None})
        elif self.path == "/models":
            self._respond(200, {"models": self.registry.describe()})
        else:
            self._respond(404, {"error": f"unknown path {self.path}"})

    def do_POST(self):
        if self.path != "/classify":
            self._respond(404, {"error": f"unknown path {self.path}"})
            return
        length = int(self.headers.get("Content-Length", 0))
        if length > MAX_PAYLOAD:
            # body is left unread, so the connection cannot be reused
            self.close_connection = True
            self._respond(413, {"error": f"payload exceeds {MAX_PAYLOAD} bytes"})
            return
        body = self.rfile.read(length)
        content_type = self.headers.get("Content-Type", "")
        try:
            req = self._build_request(content_type, body)
        except InvalidInputError as e:
            self._respond(400, {"error": str(e)})
            return

        entry = self.registry.get(req.model)
        if entry is None:
            if req.model is not None and self.registry.entries:
                self._respond(404, {"error": f"unknown model {req.model!r}"})
            else:
                self._respond(503, {"error": "no checkpoint loaded"})
            return
        try:
            resp = classify(req, entry.params, entry.model_id, protos=entry.protos)
        except InvalidInputError as e:
            self._respond(400, {"error": str(e)})
            return
        self._respond(200, resp.as_dict())

    def _build_request(self, content_type: str, body: bytes) -> ClassifyRequest:
        images: dict[str, np.ndarray] = {}
        sequences: dict[str, list[np.ndarray]] = {}
        model = None
        if content_type.startswith("application/json"):
            try:
                doc = json.loads(body)
            except json.JSONDecodeError as e:
                raise InvalidInputError(f"malformed JSON body: {e.msg}") from e
            model = doc.get("model")
            for view in VIEW_FIELDS:
                if view in doc and doc[view] is not None:
                    images[view] = _decode_png(_b64(doc[view]))
                seq_key = f"{view}_seq"
                if doc.get(seq_key):
                    sequences[view] = [_decode_png(_b64(b)) for b in doc[seq_key]]
        elif content_type.startswith("multipart/form-data"):
            fields = _parse_multipart(content_type, body)
            if "model" in fields:
                model = fields["model"].decode("utf-8").strip()
            for view in VIEW_FIELDS:
                if view in fields:
                    images[view] = _decode_png(fields[view])
        else:
            raise InvalidInputError(f"unsupported content type {content_type!r}")

        present = [v for v in VIEW_FIELDS if v in images or sequences.get(v)]
        if len(present) != 3:
            raise InvalidInputError(MISSING_VIEWS_ERROR)
        shapes = {images[v].shape for v in VIEW_FIELDS if v in images}
        if len(shapes) > 1:
            raise InvalidInputError(f"views must share dimensions, got {sorted(shapes)}")
        return ClassifyRequest(images=images, sequences=sequences or None, model=model)


def _b64(value: str) -> bytes:
    try:
        return base64.b64decode(value, validate=True)
    except Exception as e:
        raise InvalidInputError(f"invalid base64 image payload: {e}") from e


def serve_http(address: tuple[str, int], registry: ModelRegistry) -> ThreadingHTTPServer:
    """Bind and return the server (caller runs serve_forever). Port in use
    raises OSError at bind time."""
    handler = type("BoundHandler", (_Handler,), {"registry": registry})
    return ThreadingHTTPServer(address, handler)


def serve_forever(address: tuple[str, int], registry: ModelRegistry):
    server = serve_http(address, registry)
    try:
        server.serve_forever()
    finally:
        server.server_close()


def start_background(address: tuple[str, int], registry: ModelRegistry):
    """Test helper: server on a daemon thread; returns (server, thread)."""
    server = serve_http(address, registry)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
