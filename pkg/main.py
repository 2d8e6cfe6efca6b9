import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

import settings
from routes import configuration_routes
from routes import simulation_routes
from routes import moment_routes
from routes import verification_routes
from spde import __version__
from spde.errors import NumericalError, RefusalError, ValidationError

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    settings.configure_logging()
    logger.info("[api] rspde %s, artifacts under %s", __version__, settings.OUTPUT_ROOT)
    yield


app = FastAPI(title="rspde", version=__version__, lifespan=lifespan)


app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.ALLOW_ORIGINS,
    allow_credentials=False,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(configuration_routes.router)
app.include_router(simulation_routes.router)
app.include_router(moment_routes.router)
app.include_router(verification_routes.router)
app.include_router(verification_routes.oracle_router)


@app.exception_handler(ValidationError)
async def validation_error_handler(request: Request, exc: ValidationError):
    return JSONResponse(status_code=422, content={"detail": str(exc), "field": exc.field})


@app.exception_handler(RefusalError)
async def refusal_error_handler(request: Request, exc: RefusalError):
    return JSONResponse(status_code=422, content={"detail": str(exc)})


@app.exception_handler(NumericalError)
async def numerical_error_handler(request: Request, exc: NumericalError):
    logger.error("[api] numerical failure on %s: %s", request.url.path, exc)
    return JSONResponse(status_code=500, content={"detail": str(exc)})


@app.get("/")
def read_root():
    return {"service": "rspde", "version": __version__}
