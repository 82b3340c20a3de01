"""Command-line entry point."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .errors import BridgeError
from .export import ExtractorSpec, export
from .models import LAYERS, MODELS


@click.group()
def main() -> None:
    """Deep-CNN embedding exporter for the product re-identification engine."""


@main.command("export")
@click.option("--model", type=click.Choice(MODELS), required=True)
@click.option("--dir", "image_dir", required=True,
              type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False, path_type=Path))
@click.option("--layer", type=click.Choice(LAYERS), default="penultimate", show_default=True)
@click.option("--side", default=224, show_default=True)
@click.option("--batch-size", default=8, show_default=True)
@click.option("--pretrained", type=click.Choice(["auto", "require", "never"]),
              default="auto", show_default=True)
def cmd_export(
    model: str, image_dir: Path, out_path: Path, layer: str, side: int,
    batch_size: int, pretrained: str,
) -> None:
    """Embed every image under --dir into one PRID vector file."""
    spec = ExtractorSpec(
        model=model, layer=layer, side=side, batch_size=batch_size, pretrained=pretrained
    )
    try:
        summary = export(image_dir, spec, out_path)
    except BridgeError as exc:
        click.echo(json.dumps({"error": exc.code, "message": str(exc)}), err=True)
        sys.exit(1)
    click.echo(json.dumps(summary))


if __name__ == "__main__":
    main()
