from typing import List, Optional

from fastapi import APIRouter, Depends, HTTPException, Query

from app.models.report import MetricsRow
from app.storage import RunStorage, get_storage

router = APIRouter()


def _carregar(storage: RunStorage) -> List[MetricsRow]:
    if not storage.has_metrics():
        raise HTTPException(status_code=404, detail="Métricas não encontradas")
    return storage.read_metrics()


@router.get("/", response_model=List[MetricsRow])
async def listar_metricas(
    limit: Optional[int] = Query(None, ge=1, description="Número máximo de épocas a retornar"),
    skip: int = Query(0, ge=0, description="Número de épocas a pular"),
    storage: RunStorage = Depends(get_storage),
):
    """
    Lista as linhas por época do metrics.csv com paginação.

    Raises:
        HTTPException 404: Se a execução ainda não tiver métricas
    """
    linhas = _carregar(storage)[skip:]
    return linhas if limit is None else linhas[:limit]


@router.get("/ultima", response_model=MetricsRow)
async def ultima_metrica(storage: RunStorage = Depends(get_storage)):
    """
    Retorna a linha da última época registrada.

    Raises:
        HTTPException 404: Se não houver nenhuma época
    """
    linhas = _carregar(storage)
    if not linhas:
        raise HTTPException(status_code=404, detail="Nenhuma época registrada")
    return linhas[-1]


@router.get("/gate")
async def estado_gate(storage: RunStorage = Depends(get_storage)):
    """
    Resume a transição do gate das perdas de MI.

    Returns:
        dict: Época em que o gate abriu (ou None), estado atual e se a coluna é monótona
    """
    linhas = _carregar(storage)
    abertas = [linha.epoch for linha in linhas if linha.gate_open]
    monotono = all(not a.gate_open or b.gate_open for a, b in zip(linhas, linhas[1:]))
    return {
        "gate_epoch": abertas[0] if abertas else None,
        "gate_open": bool(linhas and linhas[-1].gate_open),
        "monotono": monotono,
        "epocas": len(linhas),
    }
