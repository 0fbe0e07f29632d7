"""HTTP answering service over a loaded cascade pipeline.

POST /v1/answer runs the full cascade on the documents supplied in the
request; models are read-only shared state, so concurrent requests are
independent.  Malformed bodies get a 400 with field-level messages; internal
failures get a 500 carrying an opaque incident id that is logged server-side.
"""

from __future__ import annotations

import logging
import uuid

from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .pipeline import CascadePipeline

logger = logging.getLogger("cascade_qa.service")


class DocumentIn(BaseModel):
    doc_id: str
    title: str = ""
    paragraphs: list[str]


class AnswerRequest(BaseModel):
    question: str = Field(min_length=1)
    documents: list[DocumentIn] = Field(min_length=1)


class TokenSpan(BaseModel):
    start: int
    end: int


class Provenance(BaseModel):
    doc_id: str
    paragraph_index: int
    token_span: TokenSpan


class StageTimings(BaseModel):
    doc_rank_ms: float
    para_rank_ms: float
    read_ms: float
    total_ms: float


class AnswerResponse(BaseModel):
    answer: str
    score: float
    provenance: Provenance
    timings: StageTimings


class HealthResponse(BaseModel):
    status: str


def create_app(pipeline: CascadePipeline) -> FastAPI:
    app = FastAPI(title="cascade-qa", version="0.1.0")
    app.state.pipeline = pipeline

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request, exc: RequestValidationError):
        detail = [
            {"loc": [str(part) for part in err.get("loc", ())], "msg": err.get("msg", ""), "type": err.get("type", "")}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": detail})

    @app.get("/v1/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok")

    @app.post("/v1/answer", response_model=AnswerResponse)
    def answer(request: AnswerRequest):
        try:
            result = pipeline.answer_payload(
                request.question, [doc.model_dump() for doc in request.documents]
            )
        except Exception:
            incident = uuid.uuid4().hex
            logger.exception("answer request failed (incident %s)", incident)
            return JSONResponse(status_code=500, content={"error": "internal error", "incident": incident})
        return AnswerResponse(
            answer=result.answer,
            score=result.score,
            provenance=Provenance(
                doc_id=result.doc_id,
                paragraph_index=result.para_index,
                token_span=TokenSpan(start=result.span[0], end=result.span[1]),
            ),
            timings=StageTimings(**result.timings_ms),
        )

    return app
