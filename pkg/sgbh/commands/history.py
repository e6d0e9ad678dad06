"""
History command - recent rows of the run catalogue.
"""
import argparse

from sgbh.database import get_session
from sgbh.repositories.run_repo import RunRepository


def history_command(args: argparse.Namespace) -> int:
    with get_session() as session:
        repo = RunRepository(session)
        if args.experiment:
            rows = repo.list_by_experiment(args.experiment, limit=args.limit)
        else:
            rows = repo.list(limit=args.limit)
    if not rows:
        print("no recorded runs")
        return 0
    for row in rows:
        lam = f"{row.lambda_chosen:.4g}" if row.lambda_chosen is not None else "-"
        print(f"{row.id:>5}  {row.created_at:%Y-%m-%d %H:%M:%S}  {row.experiment:<12}{row.status:<8}"
              f"exit={row.exit_code}  lambda={lam}  {row.wall_time:.2f}s  {row.config_hash[:12]}  "
              f"{row.manifest_path or ''}")
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("history", help="list recorded runs")
    parser.add_argument("--experiment", help="only runs of this experiment kind")
    parser.add_argument("--limit", type=int, default=20)
    parser.set_defaults(handler=history_command)
