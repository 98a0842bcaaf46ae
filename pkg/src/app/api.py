import logging
from contextlib import asynccontextmanager
from typing import Optional

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse

from src.config.settings import load_app_config, settings
from src.models.schemas import ErrorResponse, HealthResponse, PipelineConfig
from src.processors.audio_io import AudioDecodeError
from src.services import ModelManager, RecordingClassifier
from src.services.model_manager import FORMAT_VERSION

logger = logging.getLogger(__name__)


def _error(status_code: int, error: str, detail: Optional[str] = None) -> JSONResponse:
    return JSONResponse(
        status_code=status_code,
        content=ErrorResponse(error=error, detail=detail).model_dump(),
    )


def create_app(
    model_manager: Optional[ModelManager] = None,
    pipeline_config: Optional[PipelineConfig] = None,
    max_upload_size: Optional[int] = None,
    model_path: Optional[str] = None,
) -> FastAPI:
    """
    Build the inference service around one loaded model.

    Without ``model_manager`` the model is loaded at startup from ``model_path``,
    else ``settings.MODEL_PATH``; a load failure aborts startup.
    """
    config = pipeline_config or PipelineConfig()
    limit = max_upload_size or settings.MAX_UPLOAD_SIZE

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if app.state.classifier is None:
            path = model_path or settings.MODEL_PATH
            if path is None:
                raise RuntimeError("No model path: set MODEL_PATH or paths.model_path")
            manager = ModelManager.from_path(path)
            app.state.classifier = RecordingClassifier(manager, config)
        logger.info(f"Serving model {app.state.classifier.model.model_id}")
        yield

    app = FastAPI(
        title="Birdsong Monitor API",
        description="Classify bird species in uploaded WAV recordings",
        version="1.0.0",
        lifespan=lifespan,
    )
    app.state.classifier = (
        RecordingClassifier(model_manager, config) if model_manager is not None else None
    )

    @app.post("/classify")
    async def classify(request: Request, source: str = "upload.wav"):
        """
        Classify the WAV bytes in the request body.
        """
        declared = request.headers.get("content-length")
        if declared is not None and declared.isdigit() and int(declared) > limit:
            return _error(413, "payload-too-large")
        body = await request.body()
        if len(body) > limit:
            return _error(413, "payload-too-large")

        classifier: RecordingClassifier = request.app.state.classifier
        try:
            report = await run_in_threadpool(classifier.report_for_bytes, body, source)
        except AudioDecodeError as e:
            logger.error(f"Malformed upload {source}: {e}")
            return _error(400, "malformed-audio", str(e))
        except Exception as e:
            logger.error(f"Error classifying upload {source}: {str(e)}")
            raise HTTPException(status_code=500, detail=str(e))

        return Response(content=report.to_json(), media_type="application/json")

    @app.get("/healthz", response_model=HealthResponse)
    async def health_check(request: Request):
        """
        Health check endpoint.
        """
        manager = request.app.state.classifier.model
        return HealthResponse(
            model_id=manager.model_id,
            format_version=FORMAT_VERSION,
            labels=manager.labels,
        )

    return app


def create_default_app() -> FastAPI:
    """
    App for ``uvicorn src.app.api:app``: pipeline and model path come from the
    config file at ``CONFIG_PATH``, with ``MODEL_PATH`` taking precedence.
    """
    config = load_app_config(settings.CONFIG_PATH)
    return create_app(
        pipeline_config=config.pipeline_config(),
        model_path=settings.MODEL_PATH or config.paths.model_path,
    )


app = create_default_app()
