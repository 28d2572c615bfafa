# config.py
import logging
import os
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Type, Union

from dotenv import load_dotenv
from pydantic import BaseModel, TypeAdapter, ValidationError

from app.errors import ConfigError
from app.models.config import (
    DataConfig,
    LossWeights,
    MiBenchConfig,
    ModelConfig,
    OptimizerConfig,
    ProbeConfig,
    RunConfig,
    TrainConfig,
)

load_dotenv()

OUTPUT_DIR = os.getenv("MIMAE_OUTPUT_DIR", "runs/default")
LOG_LEVEL = os.getenv("MIMAE_LOG_LEVEL", "INFO")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def get_output_dir() -> str:
    """Retorna o diretório de saída padrão das execuções.

    Returns:
        str: Valor de MIMAE_OUTPUT_DIR ou `runs/default`
    """
    return OUTPUT_DIR


def get_log_level() -> str:
    """Retorna o nível de log configurado no ambiente (MIMAE_LOG_LEVEL)."""
    return LOG_LEVEL


def configure_logging(level: Optional[str] = None) -> None:
    """Instala um único handler de stream no logger raiz."""
    nome = (level or get_log_level()).upper()
    if not isinstance(logging.getLevelName(nome), int):
        raise ConfigError(f"nível de log desconhecido: {nome}", key="MIMAE_LOG_LEVEL", kind="range")
    logging.basicConfig(level=nome, format=LOG_FORMAT, force=True)


# registro de chaves planas --------------------------------------------------

# (prefixo, caminho da seção dentro de RunConfig, classe da seção)
_SECOES: List[Tuple[str, Tuple[str, ...], Type[BaseModel]]] = [
    ("", ("model",), ModelConfig),
    ("", ("train",), TrainConfig),
    ("", ("train", "weights"), LossWeights),
    ("", ("train", "optimizer"), OptimizerConfig),
    ("approx_", ("train", "approx_optimizer"), OptimizerConfig),
    ("data_", ("data",), DataConfig),
    ("probe_", ("probe",), ProbeConfig),
    ("mi_", ("mi",), MiBenchConfig),
]

_ANINHADOS = {"weights", "optimizer", "approx_optimizer"}


@dataclass(frozen=True)
class _Chave:
    key: str
    section: Tuple[str, ...]
    field: str
    owner: Type[BaseModel]


def _montar_registro() -> Dict[str, _Chave]:
    registro: Dict[str, _Chave] = {}
    for prefixo, caminho, classe in _SECOES:
        for nome in classe.model_fields:
            if classe is TrainConfig and nome in _ANINHADOS:
                continue
            chave = prefixo + nome
            if chave in registro:
                raise RuntimeError(f"chave de configuração duplicada: {chave}")
            registro[chave] = _Chave(key=chave, section=caminho, field=nome, owner=classe)
    registro["output_dir"] = _Chave(key="output_dir", section=(), field="output_dir", owner=RunConfig)
    return registro


REGISTRY = _montar_registro()


def config_keys() -> List[str]:
    return list(REGISTRY)


def _annotation(chave: _Chave) -> Any:
    return chave.owner.model_fields[chave.field].annotation


def _is_optional(annotation: Any) -> bool:
    return typing.get_origin(annotation) is Union and type(None) in typing.get_args(annotation)


def _is_tuple(annotation: Any) -> bool:
    return typing.get_origin(annotation) is tuple


def _tipo_erro(tipo: str) -> str:
    if tipo.startswith(("greater_than", "less_than")) or tipo in ("finite_number", "value_error"):
        return "range"
    return "type"


def _validar_valor(chave: _Chave, bruto: str, linha: Any) -> Any:
    annotation = _annotation(chave)
    if bruto == "" and _is_optional(annotation):
        return None
    valor: Any = bruto
    if _is_tuple(annotation):
        valor = [p.strip() for p in bruto.split(",") if p.strip()]
    metadata = chave.owner.model_fields[chave.field].metadata
    alvo = typing.Annotated[(annotation, *metadata)] if metadata else annotation
    adapter = TypeAdapter(alvo)
    try:
        return adapter.validate_python(valor)
    except ValidationError as exc:
        erro = exc.errors()[0]
        raise ConfigError(
            f"valor inválido {bruto!r}: {erro['msg']}",
            line=linha,
            key=chave.key,
            kind=_tipo_erro(erro["type"]),
        ) from exc


def _linhas(text: str) -> Iterable[Tuple[int, str]]:
    for numero, linha in enumerate(text.splitlines(), start=1):
        sem_comentario = linha.split("#", 1)[0].strip()
        if not sem_comentario:
            continue
        yield numero, sem_comentario


def _ler_atribuicao(texto: str, linha: Any) -> Tuple[str, str]:
    if "=" not in texto:
        raise ConfigError(f"esperado `chave = valor`, recebido {texto!r}", line=linha, kind="syntax")
    chave, valor = (p.strip() for p in texto.split("=", 1))
    if not chave:
        raise ConfigError("chave vazia", line=linha, kind="syntax")
    if chave not in REGISTRY:
        raise ConfigError("chave desconhecida", line=linha, key=chave, kind="unknown_key")
    return chave, valor


def _construir(valores: Dict[str, Tuple[Any, Any]]) -> RunConfig:
    arvore: Dict[str, Any] = {}
    for chave, (valor, _) in valores.items():
        reg = REGISTRY[chave]
        no = arvore
        for parte in reg.section:
            no = no.setdefault(parte, {})
        no[reg.field] = valor
    try:
        return RunConfig.model_validate(arvore)
    except ValidationError as exc:
        erro = exc.errors()[0]
        chave = _chave_do_erro(erro["loc"])
        linha = valores[chave][1] if chave in valores else None
        raise ConfigError(erro["msg"], line=linha, key=chave or "", kind=_tipo_erro(erro["type"])) from exc


def _chave_do_erro(loc: Tuple[Any, ...]) -> Optional[str]:
    for chave, reg in REGISTRY.items():
        if tuple(loc) == reg.section + (reg.field,):
            return chave
    return None


def parse_config(text: str, overrides: Iterable[str] = ()) -> RunConfig:
    """
    Interpreta linhas `chave = valor` (comentários com `#`) em um RunConfig.

    Chaves ausentes ficam com os padrões documentados. `overrides` são
    atribuições `chave=valor` aplicadas depois do arquivo e reportadas com
    a linha `--set`.

    Raises:
        ConfigError: Chave desconhecida, tipo errado, valor fora do intervalo ou sintaxe inválida
    """
    valores: Dict[str, Tuple[Any, Any]] = {}
    for numero, texto in _linhas(text):
        chave, bruto = _ler_atribuicao(texto, numero)
        if chave in valores:
            raise ConfigError(
                f"chave repetida (já definida na linha {valores[chave][1]})",
                line=numero,
                key=chave,
                kind="syntax",
            )
        valores[chave] = (_validar_valor(REGISTRY[chave], bruto, numero), numero)
    for texto in overrides:
        chave, bruto = _ler_atribuicao(texto.strip(), "--set")
        valores[chave] = (_validar_valor(REGISTRY[chave], bruto, "--set"), "--set")
    return _construir(valores)


def _formatar(valor: Any) -> str:
    if valor is None:
        return ""
    if isinstance(valor, bool):
        return "true" if valor else "false"
    if isinstance(valor, float):
        return repr(valor)
    if isinstance(valor, tuple):
        return ", ".join(_formatar(v) for v in valor)
    return str(valor)


def dump_config(config: RunConfig) -> str:
    """Escreve todas as chaves; `parse_config(dump_config(c)) == c`."""
    linhas = ["# configuração completa da execução"]
    for chave, reg in REGISTRY.items():
        no: Any = config
        for parte in reg.section:
            no = getattr(no, parte)
        linhas.append(f"{chave} = {_formatar(getattr(no, reg.field))}")
    return "\n".join(linhas) + "\n"


def load_run_config(path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = ()) -> RunConfig:
    """
    Lê o arquivo (se houver) e aplica os `--set`.

    Sem `output_dir` explícito, usa MIMAE_OUTPUT_DIR.
    """
    text = Path(path).read_text(encoding="utf-8") if path else ""
    overrides = list(overrides)
    config = parse_config(text, overrides)
    explicito = any(k.split("=", 1)[0].strip() == "output_dir" for k in overrides) or any(
        t.split("=", 1)[0].strip() == "output_dir" for _, t in _linhas(text)
    )
    if not explicito:
        config.output_dir = get_output_dir()
    return config
