"""HTTP serving of one unified model, and a client for it.

Endpoints
---------
GET  /healthz                       liveness, ``{"status": "ok"}``
GET  /v1/tenants                    tenants with their class intervals
GET  /v1/model                      classes, dims, model_bytes, format_version
POST /v1/tenants/{tenant}/predict   prediction restricted to ``tenant``
POST /v1/predict                    unrestricted baseline, adds ``tenant``

Request bodies are ``{"text": str, "k": int (optional)}``. Every error is
``{"code": str, "message": str}`` with a stable code.
"""

from __future__ import annotations

import asyncio
import json
import logging
import socket
import time
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import quote

import httpx
from fastapi import FastAPI, Request
from fastapi.responses import Response
from starlette.concurrency import run_in_threadpool
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import model as model_io
from .errors import (
    EmptyInputError,
    NotFoundError,
    RequestTooLargeError,
    ServiceUnavailableError,
    StartupError,
    TenantMaskError,
    UnknownTenantError,
    ValidationError,
)
from .predictor import DEFAULT_TOP_K, Alternative, Prediction, predict_for_tenant, predict_unrestricted

logger = logging.getLogger(__name__)

_STATUS = {
    UnknownTenantError: 404,
    NotFoundError: 404,
    EmptyInputError: 422,
    ValidationError: 422,
    RequestTooLargeError: 413,
}


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    model_path: Path = None
    top_k: int = DEFAULT_TOP_K
    max_body_bytes: int = 64 * 1024
    timeout_s: float = 5.0

    def __post_init__(self):
        if not 1 <= int(self.port) <= 65535:
            raise ValidationError("port must be in [1, 65535]")
        if self.top_k < 1 or self.max_body_bytes < 1 or not self.timeout_s > 0:
            raise ValidationError("top_k, max_body_bytes and timeout_s must be positive")


def _json(payload, status=200):
    body = json.dumps(payload, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    return Response(body, status_code=status, media_type="application/json")


def _error(code, message, status):
    return _json({"code": code, "message": message}, status)


def _status_for(exc):
    for cls in type(exc).__mro__:
        if cls in _STATUS:
            return _STATUS[cls]
    return 400


def prediction_body(pred: Prediction, with_tenant=False):
    out = {"gid": pred.gid, "label": pred.label, "confidence": pred.confidence}
    if with_tenant:
        out["tenant"] = pred.tenant
    alts = []
    for a in pred.alternatives:
        item = {"gid": a.gid, "label": a.label, "probability": a.probability}
        if with_tenant:
            item["tenant"] = a.tenant
        alts.append(item)
    out["alternatives"] = alts
    return out


def create_app(m: model_io.LinearModel, cfg: ServiceConfig = ServiceConfig(), model_bytes=None) -> FastAPI:
    """App serving ``m``. The model is never modified after this call."""
    if model_bytes is None:
        model_bytes = len(model_io.to_bytes(m))
    app = FastAPI(title="tenantmask", docs_url=None, redoc_url=None, openapi_url=None)
    space = m.label_space
    tenants_body = [
        {"tenant": r.tenant, "class_count": len(r), "range_start": r.start, "range_end": r.end}
        for r in space.tenant_ranges
    ]
    model_body = {
        "classes": m.n_classes,
        "dims": m.dims,
        "model_bytes": model_bytes,
        "format_version": model_io.FORMAT_VERSION,
    }

    @app.exception_handler(TenantMaskError)
    async def _domain_error(request, exc):
        return _error(exc.code, str(exc), _status_for(exc))

    @app.exception_handler(StarletteHTTPException)
    async def _http_error(request, exc):
        code = {404: "not_found", 405: "method_not_allowed"}.get(exc.status_code, "http_error")
        return _error(code, str(exc.detail), exc.status_code)

    @app.exception_handler(Exception)
    async def _unexpected(request, exc):
        logger.exception("unhandled error")
        return _error("internal", "internal server error", 500)

    async def read_request(request: Request):
        declared = request.headers.get("content-length")
        if declared is not None and declared.isdigit() and int(declared) > cfg.max_body_bytes:
            raise RequestTooLargeError(f"body exceeds {cfg.max_body_bytes} bytes")
        chunks, size = [], 0
        async for chunk in request.stream():
            size += len(chunk)
            if size > cfg.max_body_bytes:
                raise RequestTooLargeError(f"body exceeds {cfg.max_body_bytes} bytes")
            chunks.append(chunk)
        try:
            body = json.loads(b"".join(chunks).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise ValidationError("body must be UTF-8 JSON") from None
        if not isinstance(body, dict):
            raise ValidationError("body must be a JSON object")
        unknown = set(body) - {"text", "k"}
        if unknown:
            raise ValidationError(f"unknown fields: {', '.join(sorted(unknown))}")
        text = body.get("text")
        if not isinstance(text, str):
            raise ValidationError("field 'text' must be a string")
        k = body.get("k", cfg.top_k)
        if isinstance(k, bool) or not isinstance(k, int) or k < 1:
            raise ValidationError("field 'k' must be a positive integer")
        return text, k

    async def run(fn, *args):
        try:
            return await asyncio.wait_for(run_in_threadpool(fn, *args), cfg.timeout_s)
        except asyncio.TimeoutError:
            return None

    @app.get("/healthz")
    async def healthz():
        return _json({"status": "ok"})

    @app.get("/v1/tenants")
    async def tenants():
        return _json(tenants_body)

    @app.get("/v1/model")
    async def model_info():
        return _json(model_body)

    @app.post("/v1/tenants/{tenant}/predict")
    async def predict_tenant(tenant: str, request: Request):
        space.range_of(tenant)
        text, k = await read_request(request)
        pred = await run(predict_for_tenant, m, tenant, text, k)
        if pred is None:
            return _error("timeout", "prediction timed out", 504)
        return _json(prediction_body(pred))

    @app.post("/v1/predict")
    async def predict_any(request: Request):
        text, k = await read_request(request)
        pred = await run(predict_unrestricted, m, text, k)
        if pred is None:
            return _error("timeout", "prediction timed out", 504)
        return _json(prediction_body(pred, with_tenant=True))

    return app


def build_app(cfg: ServiceConfig) -> FastAPI:
    try:
        path = Path(cfg.model_path)
        m = model_io.load(path)
        size = path.stat().st_size
    except (OSError, TypeError, TenantMaskError) as exc:
        raise StartupError(f"cannot load model: {exc}") from exc
    return create_app(m, cfg, model_bytes=size)


def serve(cfg: ServiceConfig):
    """Load the model and serve until interrupted."""
    import uvicorn

    app = build_app(cfg)
    try:
        with socket.create_server((cfg.host, cfg.port)):
            pass
    except OSError as exc:
        raise StartupError(f"cannot bind {cfg.host}:{cfg.port}: {exc.strerror}") from exc
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")


# -- client ----------------------------------------------------------------

_CLIENT_ERRORS = {
    "unknown_tenant": UnknownTenantError,
    "not_found": NotFoundError,
    "empty_input": EmptyInputError,
    "request_too_large": RequestTooLargeError,
    "invalid_request": ValidationError,
}


@dataclass
class RemoteScorerClient:
    base_url: str
    timeout: float = 5.0
    retries: int = 2
    backoff_s: float = 0.1

    def __post_init__(self):
        if self.retries < 0:
            raise ValidationError("retries must be >= 0")
        self.base_url = self.base_url.rstrip("/")

    def _request(self, method, path, payload=None):
        last = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
            try:
                resp = httpx.request(method, self.base_url + path, json=payload, timeout=self.timeout)
            except httpx.TransportError as exc:
                last = exc
                continue
            return self._decode(resp)
        raise ServiceUnavailableError(f"{self.base_url} unreachable after {self.retries + 1} attempts: {last}")

    @staticmethod
    def _decode(resp):
        if resp.status_code < 400:
            return resp.json()
        try:
            err = resp.json()
            code, message = err["code"], err["message"]
        except (ValueError, KeyError, TypeError):
            code, message = "http_error", resp.text
        if resp.status_code >= 500:
            raise ServiceUnavailableError(f"server error {resp.status_code}: {message}")
        if resp.status_code == 413:
            raise RequestTooLargeError(message)
        raise _CLIENT_ERRORS.get(code, ValidationError)(message)

    def health(self):
        return self._request("GET", "/healthz")

    def tenants(self):
        return self._request("GET", "/v1/tenants")

    def predict(self, tenant, text, k=None):
        payload = {"text": text} if k is None else {"text": text, "k": k}
        if tenant is None:
            body = self._request("POST", "/v1/predict", payload)
        else:
            body = self._request("POST", f"/v1/tenants/{quote(tenant, safe='')}/predict", payload)
            body["tenant"] = tenant
            for a in body["alternatives"]:
                a["tenant"] = tenant
        alts = tuple(Alternative(a["gid"], a["tenant"], a["label"], a["probability"]) for a in body["alternatives"])
        return Prediction(body["gid"], body["tenant"], body["label"], body["confidence"], alts)


def remote_predict(client: RemoteScorerClient, tenant, text, k=None) -> Prediction:
    return client.predict(tenant, text, k)
