# main.py
import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI

from app.routers import checkpoints, config, graficos, metricas, mi
from app.storage import get_storage

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Gerenciador de ciclo de vida da aplicação FastAPI.

    Actions:
        - Garante o layout do diretório de execução na startup
        - Registra o encerramento no shutdown
    """
    storage = app.dependency_overrides.get(get_storage, get_storage)().init()
    logger.info("servindo resultados de %s", storage.root)

    yield

    logger.info("encerrando a aplicação...")


app = FastAPI(
    lifespan=lifespan,
    title="API de Resultados MI-MAE",
    description="Consulta de métricas, checkpoints, relatórios de MI e gráficos de uma execução",
)

# Configura as rotas da aplicação
app.include_router(metricas.router, prefix="/metricas", tags=["Métricas"])
app.include_router(checkpoints.router, prefix="/checkpoints", tags=["Checkpoints"])
app.include_router(mi.router, prefix="/mi", tags=["MI"])
app.include_router(graficos.router, prefix="/graficos", tags=["Gráficos"])
app.include_router(config.router, prefix="/config", tags=["Configuração"])
