"""
Preset listing command.
"""
import argparse

from sgbh.services.integrations.presets import list_presets


def format_presets() -> str:
    """One line per preset: kind, name, defaults and the (K, L) bounds for noise presets."""
    lines = []
    for row in list_presets():
        row = dict(row)
        kind, name, doc = row.pop("kind"), row.pop("name"), (row.pop("doc") or "").strip()
        fields = "  ".join(f"{key}={value:g}" if isinstance(value, float) else f"{key}={value}"
                           for key, value in row.items())
        lines.append(f"{kind:<8}{name:<15}{fields:<40}{doc}")
    return "\n".join(lines)


def list_presets_command(args: argparse.Namespace) -> int:
    print(format_presets())
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("list-presets", help="show noise and initial-condition presets")
    parser.set_defaults(handler=list_presets_command)
