# cli.py
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from app.config import configure_logging, get_log_level, load_run_config
from app.errors import ContractError, MimaeError
from app.io.checkpoint import load_checkpoint
from app.io.dataset import build_dataset, steps_per_epoch, write_dataset
from app.io.plot import plot_metrics_csv, plot_sweep_csv
from app.mi_verify import sandwich_report
from app.models.config import RunConfig
from app.probe import linear_probe
from app.storage import RunStorage, get_storage
from app.trainer import Trainer, run_pretrain, run_ratio_sweep

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_STRICT = 1
EXIT_DOMAIN = 2
EXIT_IO = 3


def _storage(config: RunConfig) -> RunStorage:
    return RunStorage(config.output_dir).init()


def _checkpoint_path(storage: RunStorage, value: Optional[str]) -> Path:
    if value and value != "latest":
        return Path(value)
    latest = storage.latest_checkpoint()
    if latest is None:
        raise ContractError(f"nenhum checkpoint em {storage.checkpoints_dir}")
    return latest


def cmd_gen_data(args: argparse.Namespace, config: RunConfig) -> int:
    out = args.out or config.data.path or str(Path(config.output_dir) / "dataset.mimds")
    data = config.data.model_copy(update={"path": None})
    dataset = build_dataset(data, config.model)
    write_dataset(out, dataset)
    print(json.dumps({"path": str(out), "images": len(dataset), "classes": dataset.class_count}))
    return EXIT_OK


def cmd_pretrain(args: argparse.Namespace, config: RunConfig) -> int:
    storage = _storage(config)
    dataset = build_dataset(config.data, config.model)
    resume = _checkpoint_path(storage, args.resume) if args.resume else None
    result = run_pretrain(config, dataset, storage=storage, resume_from=resume)
    last = result.rows[-1] if result.rows else None
    print(json.dumps({"epochs": result.trainer.state.epoch, "rec": last.rec if last else None,
                      "gate_epoch": result.trainer.state.gate_epoch}))
    return EXIT_OK


def cmd_probe(args: argparse.Namespace, config: RunConfig) -> int:
    storage = _storage(config)
    dataset = build_dataset(config.data, config.model)
    if args.random_init:
        trainer = Trainer(config)
    else:
        path = _checkpoint_path(storage, args.checkpoint)
        trainer = Trainer.from_checkpoint(load_checkpoint(path), steps_per_epoch(len(dataset), config.train.batch_size))
    result = linear_probe(trainer.mae, dataset, config.probe)
    print(result.model_dump_json())
    return EXIT_OK


def cmd_mi_bench(args: argparse.Namespace, config: RunConfig) -> int:
    storage = _storage(config)
    report = sandwich_report(config.mi)
    storage.write_mi_report(report)
    for row in report.rows:
        print(row.model_dump_json())
    for failure in report.failures:
        print(f"falha: {failure}", file=sys.stderr)
    return EXIT_STRICT if args.strict and report.failures else EXIT_OK


def cmd_plot(args: argparse.Namespace, config: RunConfig) -> int:
    storage = RunStorage(config.output_dir)
    out = Path(args.out) if args.out else storage.plots_dir
    written = plot_metrics_csv(args.metrics or storage.metrics_path, out, config.train.weights.eps_l)
    if args.sweep:
        written.append(plot_sweep_csv(args.sweep, out / "ratio_sweep.svg"))
    for path in written:
        print(path)
    return EXIT_OK


def cmd_ratio_sweep(args: argparse.Namespace, config: RunConfig) -> int:
    storage = _storage(config)
    dataset = build_dataset(config.data, config.model)
    try:
        ratios = [float(r) for r in args.ratios.split(",") if r.strip()]
    except ValueError as exc:
        raise ContractError(f"--ratios inválido: {args.ratios}") from exc
    rows = run_ratio_sweep(config, dataset, ratios, args.strategies.split(","))
    storage.write_sweep(rows)
    for row in rows:
        print(row.model_dump_json())
    return EXIT_OK


def cmd_serve(args: argparse.Namespace, config: RunConfig) -> int:
    import uvicorn

    from app.main import app

    app.dependency_overrides[get_storage] = lambda: RunStorage(config.output_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level=get_log_level().lower())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mimae", description="Pré-treino MI-MAE em escala de bancada")
    parser.add_argument("--log-level", default=None, help="Sobrepõe MIMAE_LOG_LEVEL")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="Arquivo `chave = valor`")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="CHAVE=VALOR")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="Gera (ou importa IDX) e grava o conjunto MIMDS1")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pretrain", parents=[common], help="Pré-treino com métricas e checkpoints")
    p.add_argument("--resume", default=None, help="Checkpoint ou `latest`")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("probe", parents=[common], help="Probe linear sobre o encoder congelado")
    p.add_argument("--checkpoint", default=None, help="Checkpoint (padrão: o mais recente)")
    p.add_argument("--random-init", action="store_true", help="Usa um encoder sem treino")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("mi-bench", parents=[common], help="Sanduíche InfoNCE ≤ MI ≤ CLUB")
    p.add_argument("--strict", action="store_true", help="Sai com código 1 se houver falhas")
    p.set_defaults(func=cmd_mi_bench)

    p = sub.add_parser("plot", parents=[common], help="SVGs das métricas por época")
    p.add_argument("--metrics", default=None)
    p.add_argument("--sweep", default=None, help="CSV da varredura de razões")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("ratio-sweep", parents=[common], help="Ablação da razão de máscara")
    p.add_argument("--ratios", default="0.5,0.75,0.9")
    p.add_argument("--strategies", default="complete,fixed4")
    p.set_defaults(func=cmd_ratio_sweep)

    p = sub.add_parser("serve", parents=[common], help="API de resultados")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split())


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Ponto de entrada. Erros viram uma única linha `mimae: <Classe>: <mensagem>`.

    Returns:
        int: 0 sucesso, 1 falhas com --strict, 2 erro de domínio, 3 erro de I/O
    """
    args = build_parser().parse_args(argv)
    try:
        configure_logging(args.log_level)
        config = load_run_config(args.config, args.overrides)
        return args.func(args, config)
    except MimaeError as exc:
        print(f"mimae: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"mimae: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return EXIT_IO


def run(argv: Optional[List[str]] = None) -> None:
    sys.exit(main(argv))


if __name__ == "__main__":
    run()
