"""HTTP prediction service.

``POST /predict`` takes multipart form data:

* ``audio`` (file, required): 16 kHz WAV
* ``embedding`` (field): 768 numbers, JSON list or comma separated, or
* ``transcript`` (field): raw text, embedded with the deterministic stub

and answers with one score/decision pair per loaded model. Uploaded audio
is staged in a per-request temporary directory that is removed before the
response is sent, whatever the outcome.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse

from . import audio_features
from .decision import DEFAULT_THRESHOLD, classify_score
from .errors import DataError
from .fusion_model import AUDIO_DIM, TEXT_DIM, DistressModel, predict_score
from .text_features import preprocess_text, stub_embed
from .wav import load_wav

log = logging.getLogger(__name__)

DEFAULT_MAX_BYTES = 64 * 1024 * 1024


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message

    def body(self) -> dict:
        return {"error": self.code, "detail": self.message}


@dataclass
class ServiceConfig:
    models: dict  # task_tag -> DistressModel
    thresholds: dict = field(default_factory=dict)
    staging_root: str | None = None
    max_bytes: int = DEFAULT_MAX_BYTES

    def threshold(self, task: str) -> float:
        return self.thresholds.get(task, DEFAULT_THRESHOLD)


def thresholds_from_env(environ=os.environ) -> dict:
    out = {}
    for task in ("depression", "ptsd"):
        raw = environ.get(f"DS_THRESHOLD_{task.upper()}")
        if raw:
            out[task] = float(raw)
    return out


def parse_embedding(raw: str) -> np.ndarray:
    raw = raw.strip()
    try:
        values = json.loads(raw) if raw.startswith("[") else [float(v) for v in raw.split(",") if v.strip()]
        vec = np.asarray(values, dtype=np.float64)
    except (ValueError, TypeError):
        raise ServiceError(400, "bad_embedding", "embedding must be a list of numbers") from None
    if vec.ndim != 1 or vec.size != TEXT_DIM:
        raise ServiceError(400, "bad_embedding_width", f"embedding has {vec.size} values, expected {TEXT_DIM}")
    if not np.all(np.isfinite(vec)):
        raise ServiceError(400, "bad_embedding", "embedding contains non-finite values")
    return vec


def score_sample(cfg: ServiceConfig, audio_vec, text_vec) -> dict:
    out = {}
    for task, model in sorted(cfg.models.items()):
        score = predict_score(model, audio_vec, text_vec)
        out[f"{task}_score"] = score
        out[f"{task}_decision"] = classify_score(score, cfg.threshold(task), task).kind.value
    return out


def handle_predict(cfg: ServiceConfig, audio_bytes, transcript=None, embedding=None) -> dict:
    """Score one upload; raises ServiceError for client-side problems.

    The staging directory is created and removed inside this call.
    """
    if not cfg.models:
        raise ServiceError(500, "no_models", "service has no loaded models")
    if audio_bytes is None:
        raise ServiceError(400, "missing_audio", "multipart part 'audio' is required")
    if len(audio_bytes) > cfg.max_bytes:
        raise ServiceError(413, "too_large", f"upload exceeds {cfg.max_bytes} bytes")

    if embedding is not None and str(embedding).strip():
        text_vec = parse_embedding(str(embedding))
        source = "provided"
    elif transcript is not None and str(transcript).strip():
        text_vec = stub_embed(preprocess_text(str(transcript)))
        source = "stub"
    else:
        raise ServiceError(400, "missing_text", "provide 'embedding' or 'transcript'")

    staging = Path(tempfile.mkdtemp(prefix="req-", dir=cfg.staging_root))
    try:
        wav_path = staging / "upload.wav"
        wav_path.write_bytes(audio_bytes)
        try:
            clip = load_wav(wav_path)
            audio_vec = audio_features.extract_audio_features(clip)
        except DataError as exc:
            raise ServiceError(400, "invalid_audio", str(exc)) from None
    finally:
        shutil.rmtree(staging, ignore_errors=True)

    body = score_sample(cfg, audio_vec, text_vec)
    body["feature_dims"] = {"audio": AUDIO_DIM, "text": TEXT_DIM}
    body["embedding_source"] = source
    return body


def create_app(cfg: ServiceConfig):
    app = FastAPI(title="distress-screen")

    @app.get("/health")
    def health():
        return {"status": "ok", "models": sorted(cfg.models)}

    @app.post("/predict")
    async def predict(request: Request):
        try:
            declared = request.headers.get("content-length")
            if declared is not None and declared.isdigit() and int(declared) > cfg.max_bytes:
                raise ServiceError(413, "too_large", f"request exceeds {cfg.max_bytes} bytes")
            raw = await request.body()
            if len(raw) > cfg.max_bytes:
                raise ServiceError(413, "too_large", f"request exceeds {cfg.max_bytes} bytes")
            try:
                form = await request.form()
            except Exception:
                raise ServiceError(400, "bad_request", "expected multipart/form-data") from None
            try:
                audio = form.get("audio")
                audio_bytes = await audio.read() if hasattr(audio, "read") else None
                body = await run_in_threadpool(
                    handle_predict, cfg, audio_bytes, form.get("transcript"), form.get("embedding")
                )
            finally:
                await form.close()
            return JSONResponse(body)
        except ServiceError as exc:
            return JSONResponse(exc.body(), status_code=exc.status)
        except Exception:
            log.exception("predict failed")
            return JSONResponse({"error": "internal_error", "detail": "internal error"}, status_code=500)

    return app


def serve(cfg: ServiceConfig, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(create_app(cfg), host=host, port=port, timeout_graceful_shutdown=30)
