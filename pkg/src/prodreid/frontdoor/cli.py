"""Command-line entry points.

Every command prints a JSON summary on stdout (or CSV where --format csv
makes sense) and machine-readable {"error", "message"} JSON on stderr
with a nonzero exit on failure. All randomness flows through --seed.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from prodreid import index as index_mod
from prodreid.errors import BadRequest, NoImages, ProdReidError
from prodreid.evaluation import evaluate, load_table_fixture, report, split
from prodreid.features import ExtractorConfig, pipeline
from prodreid.frontdoor.runtime import Engine, ServiceConfig, extract_directory
from prodreid.frontdoor.service import ReidServer
from prodreid.index import GallerySnapshot
from prodreid.plane import PlaneTopology, SearchRequest, plane_search
from prodreid.reid import NoveltyThreshold, calibrate_threshold, decide, enroll_images
from prodreid.synthesis import default_dataset_spec, synthesize

_FIXTURES = ("vgg16", "alexnet", "alpha_alexnet")


def _echo_json(obj: dict) -> None:
    click.echo(json.dumps(obj))


def _guarded(fn):
    """Convert engine errors into stderr JSON + exit 1."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ProdReidError as exc:
            click.echo(json.dumps({"error": exc.code, "message": str(exc)}), err=True)
            sys.exit(1)

    return wrapper


def _extractor_options(fn):
    fn = click.option(
        "--bins", default=16, show_default=True, help="Histogram bins per plane."
    )(fn)
    fn = click.option(
        "--side", default=224, show_default=True, help="Square resize side in pixels."
    )(fn)
    fn = click.option(
        "--bg-tolerance",
        default=40.0,
        show_default=True,
        help="Background removal color tolerance.",
    )(fn)
    return fn


def _topology_options(fn):
    fn = click.option("--brokers", default=1, show_default=True)(fn)
    fn = click.option("--searchers", default=1, show_default=True, help="Searchers per broker.")(fn)
    return fn


def _index_option(fn):
    return click.option(
        "--index",
        "index_path",
        envvar="PRODREID_INDEX",
        required=True,
        type=click.Path(path_type=Path),
        help="Index file (PRID); defaults to $PRODREID_INDEX.",
    )(fn)


@click.group()
@click.option("--seed", default=0, show_default=True, help="Seed for all randomness.")
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["json", "csv"]),
    default="json",
    show_default=True,
    help="Stdout rendering for tabular results.",
)
@click.version_option()
@click.pass_context
def main(ctx: click.Context, seed: int, fmt: str) -> None:
    """Product re-identification engine."""
    ctx.obj = {"seed": seed, "format": fmt}


@main.command("index")
@click.argument("gallery_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option(
    "--out",
    "out_path",
    envvar="PRODREID_INDEX",
    required=True,
    type=click.Path(dir_okay=False, path_type=Path),
    help="Output PRID file; defaults to $PRODREID_INDEX.",
)
@click.option(
    "--partitions",
    default=1,
    show_default=True,
    help="Advisory searcher count echoed in the summary; the file itself is flat.",
)
@_extractor_options
@_guarded
def cmd_index(
    gallery_dir: Path, out_path: Path, partitions: int, bins: int, side: int, bg_tolerance: float
) -> None:
    """Extract features from GALLERY_DIR (<class>/<images>) into a PRID file."""
    cfg = ExtractorConfig(bins=bins, side=side, bg_tolerance=bg_tolerance)
    vectors = extract_directory(gallery_dir, cfg)
    snap = GallerySnapshot(tuple(vectors))
    index_mod.save(snap, out_path)
    _echo_json(
        {
            "path": str(out_path),
            "records": len(snap),
            "classes": len(snap.classes()),
            "dim": snap.dim,
            "partitions": partitions,
        }
    )


def _load_query_values(
    image: Path | None, vector_path: Path | None, cfg: ExtractorConfig
):
    if (image is None) == (vector_path is None):
        raise BadRequest("exactly one of --image or --vector is required")
    if image is not None:
        return pipeline(image, cfg).values
    donor = index_mod.load(vector_path)
    if len(donor) == 0:
        raise BadRequest(f"vector file {vector_path} holds no records")
    return donor.records[0].values


@main.command("query")
@_index_option
@click.option("--image", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option(
    "--vector",
    "vector_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="PRID file; its first record is the query vector.",
)
@click.option("-k", "--k", default=5, show_default=True, help="Neighbors to return.")
@click.option("--tau", default=None, type=float, help="Novelty threshold (squared distance).")
@click.option("--vote-k", default=5, show_default=True)
@_topology_options
@_extractor_options
@click.pass_context
@_guarded
def cmd_query(
    ctx: click.Context,
    index_path: Path,
    image: Path | None,
    vector_path: Path | None,
    k: int,
    tau: float | None,
    vote_k: int,
    brokers: int,
    searchers: int,
    bins: int,
    side: int,
    bg_tolerance: float,
) -> None:
    """Search the index with an image or a stored vector and decide."""
    cfg = ExtractorConfig(bins=bins, side=side, bg_tolerance=bg_tolerance)
    values = _load_query_values(image, vector_path, cfg)
    snap = index_mod.load(index_path)
    topology = PlaneTopology(brokers=brokers, searchers_per_broker=searchers, k_default=k)
    response = plane_search(topology, snap, SearchRequest(values=values, k=k))
    threshold = NoveltyThreshold.fixed(tau) if tau is not None else NoveltyThreshold.closed_set()
    decision = decide(response.hits, threshold, vote_k=vote_k)
    if ctx.obj["format"] == "csv":
        click.echo("id,label,distance")
        for hit in response.hits:
            click.echo(f"{hit.id},{hit.label},{hit.distance}")
        return
    out = decision.as_dict()
    out["hits"] = [hit.as_dict() for hit in response.hits]
    out["timings_us"] = response.timings_us
    out["empty_gallery"] = response.empty_gallery
    _echo_json(out)


@main.command("enroll")
@_index_option
@click.option("--label", required=True, help="New class label.")
@click.argument("images", nargs=-1, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@_extractor_options
@_guarded
def cmd_enroll(
    index_path: Path, label: str, images: tuple[Path, ...], bins: int, side: int, bg_tolerance: float
) -> None:
    """Add IMAGES to the index as a brand-new class."""
    if not images:
        raise NoImages("enroll needs at least one image file")
    cfg = ExtractorConfig(bins=bins, side=side, bg_tolerance=bg_tolerance)
    snap = index_mod.load(index_path)
    new_snap = enroll_images(snap, list(images), label, cfg)
    index_mod.save(new_snap, index_path)
    _echo_json(
        {
            "label": label,
            "added": len(images),
            "records": len(new_snap),
            "version": new_snap.version,
        }
    )


@main.command("evaluate")
@click.option("--fixture", type=click.Choice(_FIXTURES), help="Score a shipped identification grid.")
@click.option(
    "--data",
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    help="Dataset directory (<class>/<images>) for a split-and-score run.",
)
@click.option("--train-fraction", default=0.8, show_default=True)
@click.option("--tau", default=None, type=float, help="Fixed threshold; omit to calibrate.")
@click.option("--percentile", default=95.0, show_default=True)
@click.option("--margin", default=0.1, show_default=True)
@click.option("--vote-k", default=5, show_default=True)
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory for report.csv and report.json.",
)
@_topology_options
@_extractor_options
@click.pass_context
@_guarded
def cmd_evaluate(
    ctx: click.Context,
    fixture: str | None,
    data: Path | None,
    train_fraction: float,
    tau: float | None,
    percentile: float,
    margin: float,
    vote_k: int,
    out_dir: Path | None,
    brokers: int,
    searchers: int,
    bins: int,
    side: int,
    bg_tolerance: float,
) -> None:
    """Score either a shipped fixture grid or a dataset directory."""
    if (fixture is None) == (data is None):
        raise BadRequest("exactly one of --fixture or --data is required")
    timings: dict | None = None
    if fixture is not None:
        matrix = load_table_fixture(fixture)
    else:
        cfg = ExtractorConfig(bins=bins, side=side, bg_tolerance=bg_tolerance)
        vectors = extract_directory(data, cfg)
        gallery_pairs, query_pairs = split(
            [(v.label, v) for v in vectors], train_fraction, ctx.obj["seed"]
        )
        gallery = GallerySnapshot(tuple(v for _, v in gallery_pairs))
        queries = [v for _, v in query_pairs]
        threshold = (
            NoveltyThreshold.fixed(tau)
            if tau is not None
            else calibrate_threshold(gallery, percentile, margin)
        )
        topology = PlaneTopology(brokers=brokers, searchers_per_broker=searchers)
        matrix = evaluate(gallery, queries, topology, threshold, vote_k=vote_k)
    csv_path = json_path = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "report.csv"
        json_path = out_dir / "report.json"
    payload = report(matrix, timings, csv_path, json_path)
    if ctx.obj["format"] == "csv":
        click.echo(matrix.to_csv(), nl=False)
        return
    _echo_json(
        {
            "accuracy": payload["accuracy"],
            "mislabels": len(payload["mislabels"]),
            "classes": len(matrix.classes),
            "total": matrix.total,
            "csv": None if csv_path is None else str(csv_path),
            "json": None if json_path is None else str(json_path),
        }
    )


@main.command("synth")
@click.option(
    "--out",
    "out_dir",
    required=True,
    type=click.Path(file_okay=False, path_type=Path),
    help="Output directory; one subdirectory per class.",
)
@click.option("--images-per-class", default=22, show_default=True)
@click.option("--jitter", default=12, show_default=True, help="Per-image color jitter amplitude.")
@click.option("--lookalikes", is_flag=True, help="Swap in the near-identical white pair.")
@click.option(
    "--image-format",
    type=click.Choice(["png", "ppm"]),
    default="png",
    show_default=True,
)
@click.pass_context
@_guarded
def cmd_synth(
    ctx: click.Context,
    out_dir: Path,
    images_per_class: int,
    jitter: int,
    lookalikes: bool,
    image_format: str,
) -> None:
    """Generate the seeded synthetic bottle dataset."""
    spec = default_dataset_spec(
        seed=ctx.obj["seed"],
        images_per_class=images_per_class,
        jitter=jitter,
        lookalikes=lookalikes,
    )
    produced = synthesize(spec, out_dir, image_format)
    _echo_json(
        {
            "out": str(out_dir),
            "classes": len(spec.classes),
            "images": len(produced),
            "seed": ctx.obj["seed"],
            "lookalikes": lookalikes,
        }
    )


@main.command("serve")
@_index_option
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=0, show_default=True, help="0 binds an ephemeral port.")
@click.option("--tau", default=None, type=float, help="Fixed threshold for query decisions.")
@click.option("--calibrate", is_flag=True, help="Calibrate tau from the index at startup.")
@click.option("--percentile", default=95.0, show_default=True)
@click.option("--margin", default=0.1, show_default=True)
@click.option("-k", "--k", default=5, show_default=True, help="Default neighbors per query.")
@_topology_options
@_guarded
def cmd_serve(
    index_path: Path,
    host: str,
    port: int,
    tau: float | None,
    calibrate: bool,
    percentile: float,
    margin: float,
    k: int,
    brokers: int,
    searchers: int,
) -> None:
    """Serve line-delimited JSON requests (query/enroll/stats) over TCP."""
    if tau is not None and calibrate:
        raise BadRequest("--tau and --calibrate are mutually exclusive")
    topology = PlaneTopology(brokers=brokers, searchers_per_broker=searchers, k_default=k)
    snap = index_mod.load(index_path)
    if tau is not None:
        threshold = NoveltyThreshold.fixed(tau)
    elif calibrate:
        threshold = calibrate_threshold(snap, percentile, margin)
    else:
        threshold = NoveltyThreshold.closed_set()
    config = ServiceConfig(
        index_path=index_path, topology=topology, threshold=threshold, port=port
    )
    engine = Engine(config, snapshot=snap)
    server = ReidServer(engine, host=host, port=port)
    tau_out = None if threshold.calibration.get("method") == "closed_set" else threshold.tau
    _echo_json({"listening": server.bound_port, "records": len(snap), "tau": tau_out})
    sys.stdout.flush()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


if __name__ == "__main__":
    main()
