from fastapi import APIRouter, Depends, HTTPException
from fastapi.responses import PlainTextResponse

from app.storage import RunStorage, get_storage

router = APIRouter()


@router.get("", response_class=PlainTextResponse)
async def obter_config(storage: RunStorage = Depends(get_storage)):
    """
    Retorna o config.txt completo da execução.

    Raises:
        HTTPException 404: Se a execução não tiver configuração gravada
    """
    texto = storage.read_config_text()
    if texto is None:
        raise HTTPException(status_code=404, detail="Configuração não encontrada")
    return texto
