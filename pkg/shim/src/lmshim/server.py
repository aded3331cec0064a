"""FastAPI app implementing the wire protocol over a model backend.

POST JSON endpoints: /v1/tokenize, /v1/detokenize, /v1/logprobs,
/v1/sample. Malformed bodies return 400 with {"error": ...}; model
failures return 500. Model access is serialized behind a lock, so
responses are independent of request arrival order.
"""

from __future__ import annotations

import threading

import click
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict

from .backends import Backend, BackendError, RequestError, load_backend
from .config import Precision, ShimConfig


class _Body(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TokenizeRequest(_Body):
    text: str


class DetokenizeRequest(_Body):
    ids: list[int]


class LogprobsRequest(_Body):
    ids: list[int]
    context_ids: list[int] | None = None


class SampleRequest(_Body):
    prompt_ids: list[int]
    max_new: int
    top_k: int
    temperature: float
    seed: int


def create_app(backend: Backend) -> FastAPI:
    app = FastAPI(title="trapkit-shim")
    lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def _bad_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(RequestError)
    async def _bad_request(request: Request, exc: RequestError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(BackendError)
    async def _model_failure(request: Request, exc: BackendError):
        return JSONResponse(status_code=500, content={"error": str(exc)})

    @app.post("/v1/tokenize")
    def tokenize(req: TokenizeRequest):
        with lock:
            ids = backend.tokenize(req.text)
        return {"ids": ids, "provider_id": backend.provider_id}

    @app.post("/v1/detokenize")
    def detokenize(req: DetokenizeRequest):
        with lock:
            return {"text": backend.detokenize(req.ids)}

    @app.post("/v1/logprobs")
    def logprobs(req: LogprobsRequest):
        with lock:
            return {"logprobs": backend.logprobs(req.ids, req.context_ids)}

    @app.post("/v1/sample")
    def sample(req: SampleRequest):
        with lock:
            ids = backend.sample(req.prompt_ids, req.max_new, req.top_k,
                                 req.temperature, req.seed)
            return {"ids": ids, "text": backend.detokenize(ids)}

    return app


@click.command()
@click.option("--model-id", required=True,
              help="trapkit-ngram model file or transformers checkpoint id")
@click.option("--device", default="cpu", show_default=True)
@click.option("--precision", default="float32", show_default=True,
              type=click.Choice([p.value for p in Precision]))
@click.option("--port", default=8741, show_default=True, type=int)
@click.option("--max-batch", default=8, show_default=True, type=int)
def main(model_id, device, precision, port, max_batch):
    """Serve a pretrained model behind the trapkit wire protocol."""
    import uvicorn
    config = ShimConfig(model_id=model_id, device=device,
                        precision=Precision(precision), port=port,
                        max_batch=max_batch)
    app = create_app(load_backend(config))
    uvicorn.run(app, host="0.0.0.0", port=config.port)


if __name__ == "__main__":
    main()
