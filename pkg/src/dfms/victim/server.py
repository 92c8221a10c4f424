"""
HTTP serving for the victim.

``POST /v1/query`` answers hard- or soft-label queries for a packed image batch,
``GET /v1/stats`` reports the ledger, ``GET /health`` is the liveness probe. Handlers
are plain ``def`` functions, so FastAPI runs them on its worker thread pool; the
ledger's atomic check-and-add keeps concurrent accounting exact.
"""

from typing import List, Literal, Optional

import uvicorn
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from loguru import logger
from pydantic import BaseModel

import dfms
from dfms.core.config import settings
from dfms.core.errors import BudgetExhaustedError, InvariantError
from dfms.victim.oracle import VictimOracle
from dfms.victim.wire import decode_images


class QueryRequest(BaseModel):
    mode: Literal["hard", "soft"]
    images: str
    shape: List[int]
    phase: str = "remote"


def _error(status_code: int, error: str, **extra) -> JSONResponse:
    return JSONResponse(status_code=status_code, content={"error": error, **extra})


def create_app(oracle: VictimOracle) -> FastAPI:
    """
    Creates the FastAPI application serving one victim.

    Args:
        oracle: The victim and the ledger every request is charged to

    Returns:
        FastAPI: The configured application
    """
    app = FastAPI(
        title="dfms victim",
        description="Hard/soft-label query endpoint with budget accounting",
        version=dfms.__version__,
    )
    app.state.oracle = oracle

    @app.exception_handler(RequestValidationError)
    async def bad_request(request: Request, exc: RequestValidationError) -> JSONResponse:
        logger.warning(f"Malformed query request: {exc.errors()}")
        return _error(400, "bad_shape", detail=str(exc.errors()))

    @app.post("/v1/query")
    def query(body: QueryRequest):
        """Label a batch; every image is charged to the ledger."""
        try:
            batch = decode_images(body.images, body.shape)
            if body.mode == "hard":
                result = {"labels": oracle.hard_label_query(batch, body.phase).tolist()}
            else:
                result = {"probs": oracle.soft_label_query(batch, body.phase).tolist()}
        except InvariantError as e:
            logger.warning(f"Rejected query: {e}")
            return _error(400, "bad_shape", detail=str(e))
        except BudgetExhaustedError as e:
            return _error(
                429,
                "budget_exhausted",
                requested=e.requested,
                queries_used=e.used,
                budget=e.budget,
            )
        snapshot = oracle.ledger_snapshot()
        result.update(queries_used=snapshot.used, budget_remaining=snapshot.remaining, charged=len(batch))
        return result

    @app.get("/v1/stats")
    def stats():
        """Ledger totals and the victim's interface."""
        snapshot = oracle.ledger_snapshot()
        return {
            "used": snapshot.used,
            "budget": snapshot.budget,
            "budget_remaining": snapshot.remaining,
            "phase_breakdown": snapshot.phase_breakdown,
            "num_classes": oracle.num_classes,
            "input_shape": list(oracle.input_shape),
        }

    @app.get("/health")
    async def health_check():
        """Health check endpoint for monitoring."""
        return {"status": "healthy"}

    return app


def serve(oracle: VictimOracle, host: Optional[str] = None, port: Optional[int] = None) -> None:
    """Run the victim server until interrupted."""
    host = host or settings.SERVER_HOST
    port = port or settings.SERVER_PORT
    logger.info(
        f"Serving victim on http://{host}:{port} "
        f"(budget {oracle.ledger.budget if oracle.ledger.budget is not None else 'unlimited'})"
    )
    uvicorn.run(create_app(oracle), host=host, port=port, log_level=settings.LOG_LEVEL.lower())
