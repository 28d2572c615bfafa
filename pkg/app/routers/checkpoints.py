from typing import List

from fastapi import APIRouter, Depends, HTTPException

from app.models.report import CheckpointInfo
from app.storage import RunStorage, get_storage

router = APIRouter()


@router.get("/", response_model=List[CheckpointInfo])
async def listar_checkpoints(storage: RunStorage = Depends(get_storage)):
    """Lista os checkpoints da execução em ordem de época."""
    return storage.list_checkpoints()


@router.get("/{nome}", response_model=CheckpointInfo)
async def obter_checkpoint(nome: str, storage: RunStorage = Depends(get_storage)):
    """
    Obtém os metadados de um checkpoint pelo nome.

    Params:
        nome (str): Ex.: epoch-0010 ou epoch-0010.ckpt

    Raises:
        HTTPException 404: Se o checkpoint não existir
    """
    path = storage.find_checkpoint(nome)
    if path is None:
        raise HTTPException(status_code=404, detail="Checkpoint não encontrado")
    return storage.checkpoint_info(path)
