from typing import List

from fastapi import APIRouter, Depends, HTTPException

from app.models.report import SandwichRow
from app.storage import RunStorage, get_storage

router = APIRouter()


@router.get("/", response_model=List[SandwichRow])
async def relatorio_mi(storage: RunStorage = Depends(get_storage)):
    """
    Linhas do último relatório InfoNCE ≤ MI verdadeira ≤ CLUB.

    Raises:
        HTTPException 404: Se mi-bench ainda não rodou nesta execução
    """
    if not storage.mi_path.exists():
        raise HTTPException(status_code=404, detail="Relatório de MI não encontrado")
    return storage.read_mi_report()
