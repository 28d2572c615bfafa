from fastapi import APIRouter, Depends, HTTPException
from fastapi.responses import Response

from app.config import parse_config
from app.errors import ContractError
from app.io.plot import PLOT_METRICS, render_metric_svg
from app.storage import RunStorage, get_storage

router = APIRouter()


@router.get("/{metrica}")
async def grafico(metrica: str, storage: RunStorage = Depends(get_storage)):
    """
    Renderiza o SVG de uma métrica por época.

    O limiar ε_l vem do config.txt da execução quando existir.

    Raises:
        HTTPException 404: Métrica desconhecida, sem métricas ou sem valores
    """
    if metrica not in PLOT_METRICS:
        raise HTTPException(status_code=404, detail="Métrica desconhecida")
    if not storage.has_metrics():
        raise HTTPException(status_code=404, detail="Métricas não encontradas")
    texto = storage.read_config_text()
    eps_l = parse_config(texto).train.weights.eps_l if texto else 0.5
    linhas = storage.read_metrics()
    try:
        svg = render_metric_svg(linhas, metrica, eps_l)
    except (ContractError, ValueError):
        raise HTTPException(status_code=404, detail="Sem valores para esta métrica")
    return Response(content=svg, media_type="image/svg+xml")
