# errors.py
from typing import Any, Dict, Optional


class MimaeError(Exception):
    """Base de todos os erros de domínio do projeto."""


class ShapeError(MimaeError, ValueError):
    """Dimensões incompatíveis entre tensores."""


class ContractError(MimaeError, ValueError):
    """Pré-condição de uma operação violada."""


class ConfigError(ContractError):
    """
    Erro ao interpretar um arquivo de configuração.

    Attributes:
        line (str): Linha do arquivo (ou `--set`) onde o erro ocorreu
        key (str): Chave envolvida
        kind (str): unknown_key, type, range ou syntax
    """

    def __init__(self, message: str, line: Any = None, key: str = "", kind: str = "syntax"):
        self.line = line
        self.key = key
        self.kind = kind
        where = f"linha {line}: " if line is not None else ""
        chave = f"{key}: " if key else ""
        super().__init__(f"{where}{chave}{message} [{kind}]")


class FormatError(MimaeError, ValueError):
    """
    Arquivo binário ou CSV inválido.

    Attributes:
        path (str): Caminho do arquivo
        offset (Optional[int]): Byte onde o problema foi detectado
        row (Optional[int]): Linha do CSV (1 = primeira linha de dados)
    """

    def __init__(
        self,
        message: str,
        path: str = "",
        offset: Optional[int] = None,
        row: Optional[int] = None,
    ):
        self.path = path
        self.offset = offset
        self.row = row
        partes = [str(path)] if path else []
        if offset is not None:
            partes.append(f"offset {offset}")
        if row is not None:
            partes.append(f"linha {row}")
        prefixo = ": ".join(partes)
        super().__init__(f"{prefixo}: {message}" if prefixo else message)


class NonFiniteError(MimaeError, FloatingPointError):
    """
    Valor NaN/Inf encontrado.

    Attributes:
        snapshot (Dict[str, Any]): Estado diagnóstico no momento da falha
    """

    def __init__(self, message: str, snapshot: Optional[Dict[str, Any]] = None):
        self.snapshot = snapshot or {}
        super().__init__(message)
