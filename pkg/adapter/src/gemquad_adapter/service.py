"""FastAPI app implementing the curation wire protocol.

POST /v1/generate, /v1/predict, /v1/train and GET /v1/health. Malformed bodies
answer 400; a second concurrent training request answers 503 (single-job
policy, training is synchronous within the request).
"""

from __future__ import annotations

import logging
import threading

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .config import AdapterConfig
from .models import Generator, ModelRegistry
from .training import TrainRequestError, run_training

logger = logging.getLogger(__name__)


class SamplingBody(BaseModel):
    do_sample: bool = True
    temperature: float = 0.9
    top_k: int = 50
    top_p: float = 0.95
    max_length: int = Field(default=50, ge=1, le=512)


class GenerateBody(BaseModel):
    prompt: str
    sampling: SamplingBody = SamplingBody()
    seed: int = 0


class PredictItem(BaseModel):
    id: str
    context: str
    question: str


class PredictBody(BaseModel):
    model: str
    items: list[PredictItem] = Field(min_length=1)


class TrainStageBody(BaseModel):
    name: str
    records_uri: str
    epochs: int


class TrainBody(BaseModel):
    base_model: str
    stages: list[TrainStageBody]
    hyperparams: dict = Field(default_factory=dict)
    validation_uri: str = ""


def build_app(cfg: AdapterConfig) -> FastAPI:
    app = FastAPI(title="gemquad-adapter", version="0.1.0")
    registry = ModelRegistry(cfg)
    state = {"generator": None}
    generator_lock = threading.Lock()
    train_lock = threading.Lock()

    def generator() -> Generator:
        with generator_lock:
            if state["generator"] is None:
                state["generator"] = Generator(cfg)
            return state["generator"]

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors()[:3])})

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "models": {
            "generator": cfg.generator_model,
            "student_base": cfg.student_model,
            "trained": registry.known_ids(),
        }}

    @app.post("/v1/generate")
    def generate(body: GenerateBody):
        text = generator().generate(body.prompt, body.sampling.model_dump(), body.seed)
        return {"text": text}

    @app.post("/v1/predict")
    def predict(body: PredictBody):
        predictor = registry.resolve(body.model)
        if predictor is None:
            return JSONResponse(status_code=400,
                                content={"error": f"unknown model {body.model!r}"})
        answers = []
        for item in body.items:
            text, start = predictor.predict(item.context, item.question)
            answers.append({"id": item.id, "text": text, "start": start})
        return {"answers": answers}

    @app.post("/v1/train")
    def train(body: TrainBody):
        if not body.stages:
            return JSONResponse(status_code=400, content={"error": "stages must be non-empty"})
        if not train_lock.acquire(blocking=False):
            return JSONResponse(status_code=503,
                                content={"error": "a training job is already active"})
        try:
            result = run_training(cfg, registry, body.base_model,
                                  [s.model_dump() for s in body.stages],
                                  body.hyperparams, body.validation_uri)
            return result
        except TrainRequestError as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        finally:
            train_lock.release()

    app.state.train_lock = train_lock
    app.state.registry = registry
    return app
