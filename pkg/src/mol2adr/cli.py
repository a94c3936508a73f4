"""Command-line interface for mol2adr."""

import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import typer

try:  # typer >= 0.26 vendors its own click
    from typer._click import exceptions as click_exceptions
except ImportError:
    from click import exceptions as click_exceptions
from rich.console import Console
from rich.logging import RichHandler

from . import __version__
from .canonical import canonical_smiles
from .checkpoint import CHECKPOINT_VERSION
from .codec import CODEC_VERSION
from .config import RunConfig, format_config, load_config
from .dataset import load_dataset, read_lines
from .errors import Mol2AdrError
from .fragment import RULES_VERSION, fragment, load_rules
from .metrics import evaluate
from .motif_graph import (
    GRAPH_VERSION,
    VOCAB_VERSION,
    MotifVocabulary,
    build_association_graph,
    build_vocabulary,
)
from .perception import perceive
from .smiles import parse_smiles

# Initialize Typer app
app = typer.Typer(
    name="mol2adr",
    help="Predict adverse drug reactions from molecular structure",
    add_completion=False,
)

# Diagnostics go to stderr; stdout carries data only
console = Console(stderr=True)


def setup_logging(verbose: bool = False) -> None:
    """Configure logging with rich handler."""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, rich_tracebacks=True)],
    )


def version_callback(value: bool):
    """Print version and file format versions, then exit."""
    if value:
        typer.echo(f"mol2adr version {__version__}")
        typer.echo(
            f"formats: checkpoint {CHECKPOINT_VERSION}, vocab {VOCAB_VERSION}, "
            f"graph {GRAPH_VERSION}, codec {CODEC_VERSION}, rules {RULES_VERSION}"
        )
        raise typer.Exit()


def _fail(e: Exception, verbose: bool = False) -> None:
    console.print(f"[red]Error:[/red] {e}")
    if verbose:
        console.print_exception()
    if isinstance(e, Mol2AdrError):
        raise typer.Exit(code=e.exit_code)
    if isinstance(e, (FileNotFoundError, UnicodeDecodeError)):
        raise typer.Exit(code=2)
    raise typer.Exit(code=1)


def _stdin_lines() -> List[str]:
    return [line.strip() for line in sys.stdin.read().splitlines() if line.strip()]


@app.callback()
def main(
    version: Optional[bool] = typer.Option(
        None,
        "--version",
        "-V",
        callback=version_callback,
        is_eager=True,
        help="Show version and file format versions, then exit",
    ),
):
    """mol2adr - generate adverse drug reaction labels from molecular structure."""
    pass


@app.command()
def parse(
    verbose: bool = typer.Option(False, "--verbose", help="Enable verbose logging"),
):
    """
    Print the perceived graph of each SMILES read from standard input.

    One JSON object per input line.

    Example:
        echo "ClCc1ccccc1" | mol2adr parse
    """
    setup_logging(verbose)
    try:
        for smiles in _stdin_lines():
            typer.echo(json.dumps(perceived_json(smiles), sort_keys=True))
    except Exception as e:
        _fail(e, verbose)


def perceived_json(smiles: str) -> Dict:
    pmol = perceive(parse_smiles(smiles))
    mol = pmol.base
    atoms = [
        {
            "element": a.element,
            "charge": a.formal_charge,
            "h": pmol.total_h(i),
            "aromatic": a.aromatic,
            "isotope": a.isotope,
            "chirality": a.chirality.value,
            "radicals": a.radical_electrons,
            "degree": pmol.degree[i],
            "hybridization": pmol.hybridization[i].value,
            "in_ring": pmol.ring_membership[i],
        }
        for i, a in enumerate(mol.atoms)
    ]
    bonds = [
        {"a": b.a, "b": b.b, "order": b.order.value, "stereo": b.stereo.value,
         "conjugated": b.conjugated, "in_ring": b.in_ring}
        for b in mol.bonds
    ]
    return {"smiles": smiles, "canonical": canonical_smiles(pmol), "atoms": atoms, "bonds": bonds}


@app.command("fragment")
def fragment_cmd(
    method: str = typer.Option("brics", "--method", "-m", help="brics or rings"),
    rules: Optional[Path] = typer.Option(None, "--rules", help="BRICS rule table JSON"),
    verbose: bool = typer.Option(False, "--verbose", help="Enable verbose logging"),
):
    """
    Print the motifs of each SMILES read from standard input, one per line.

    Molecules are separated by a blank line.

    Example:
        echo "ClCc1ccccc1" | mol2adr fragment
    """
    setup_logging(verbose)
    try:
        table = load_rules(rules) if method == "brics" else None
        for k, smiles in enumerate(_stdin_lines()):
            if k:
                typer.echo("")
            for motif in fragment(perceive(parse_smiles(smiles)), table, method).motifs:
                typer.echo(motif.canonical)
    except Exception as e:
        _fail(e, verbose)


def _corpus(dataset: Path, method: str, rules: Optional[Path], workers: int):
    from .core import prepare_drugs

    records = load_dataset(dataset).records
    table = load_rules(rules) if method == "brics" else None
    drugs = prepare_drugs(records, table, method, dataset.parent, workers)
    return [d.corpus_entry() for d in drugs]


@app.command()
def vocab(
    dataset: Path = typer.Argument(..., help="drug_id/structure/labels TSV"),
    output: Path = typer.Option("vocab.jsonl", "--output", "-o", help="Vocabulary file"),
    method: str = typer.Option("brics", "--method", "-m", help="brics or rings"),
    prune: Optional[float] = typer.Option(None, "--prune", help="Average TF-IDF threshold"),
    rules: Optional[Path] = typer.Option(None, "--rules", help="BRICS rule table JSON"),
    workers: int = typer.Option(4, "--workers", help="Preparation threads"),
    verbose: bool = typer.Option(False, "--verbose", help="Enable verbose logging"),
):
    """
    Build the motif vocabulary of a dataset.

    Example:
        mol2adr vocab train.tsv -o vocab.jsonl
    """
    setup_logging(verbose)
    try:
        built = build_vocabulary(_corpus(dataset, method, rules, workers), prune)
        built.save(output)
        console.print(f"[green][OK][/green] {len(built)} motifs written to {output}")
    except Exception as e:
        _fail(e, verbose)


@app.command()
def graph(
    dataset: Path = typer.Argument(..., help="drug_id/structure/labels TSV"),
    output: Path = typer.Option("graph.json", "--output", "-o", help="Association graph file"),
    vocab_path: Optional[Path] = typer.Option(
        None, "--vocab", help="Existing vocabulary (default: build one next to the graph)"
    ),
    method: str = typer.Option("brics", "--method", "-m", help="brics or rings"),
    rules: Optional[Path] = typer.Option(None, "--rules", help="BRICS rule table JSON"),
    workers: int = typer.Option(4, "--workers", help="Preparation threads"),
    verbose: bool = typer.Option(False, "--verbose", help="Enable verbose logging"),
):
    """
    Build the molecule-motif association graph of a dataset.

    Example:
        mol2adr graph train.tsv -o graph.json
    """
    setup_logging(verbose)
    try:
        corpus = _corpus(dataset, method, rules, workers)
        if vocab_path is not None:
            motif_vocab = MotifVocabulary.load(vocab_path)
        else:
            motif_vocab = build_vocabulary(corpus)
            motif_vocab.save(output.with_name("vocab.jsonl"))
        built = build_association_graph(corpus, motif_vocab)
        built.save(output)
        console.print(
            f"[green][OK][/green] {built.n_nodes} nodes, {len(built.edges)} edges "
            f"written to {output}"
        )
    except Exception as e:
        _fail(e, verbose)


def _resolve(config_file: Optional[Path], **overrides) -> RunConfig:
    return load_config(config_file, overrides)


@app.command()
def train(
    config_file: Optional[Path] = typer.Option(None, "--config", "-c", help="key = value file"),
    dataset: Optional[Path] = typer.Option(None, "--dataset", "-d", help="Dataset TSV"),
    output_dir: Optional[Path] = typer.Option(None, "--output", "-o", help="Run directory root"),
    epochs: Optional[int] = typer.Option(None, "--epochs", help="Training epochs"),
    seeds: Optional[str] = typer.Option(None, "--seeds", help="Comma-separated seeds"),
    d_model: Optional[int] = typer.Option(None, "--d-model", help="Model width"),
    batch_size: Optional[int] = typer.Option(None, "--batch-size", help="Drugs per step"),
    feature_mode: Optional[str] = typer.Option(None, "--feature-mode", help="mol+motif|mol|motif"),
    fragmenter: Optional[str] = typer.Option(None, "--fragmenter", help="brics|rings"),
    float_width: Optional[int] = typer.Option(None, "--float-width", help="32 or 64"),
    prune: Optional[float] = typer.Option(None, "--prune", help="Average TF-IDF threshold"),
    raw_features: Optional[bool] = typer.Option(
        None, "--raw-features/--standardized-features", help="Skip feature standardization"
    ),
    sinusoidal_pos: Optional[bool] = typer.Option(
        None, "--sinusoidal-pos/--learned-pos", help="Fixed sinusoidal position encodings"
    ),
    allow_duplicates: Optional[bool] = typer.Option(
        None, "--allow-duplicates/--unique-labels", help="Let generation repeat a label"
    ),
    verbose: bool = typer.Option(False, "--verbose", help="Enable verbose logging"),
):
    """
    Train and test one model per seed, then summarize the metrics.

    Each seed gets a run directory with the checkpoint, vocabulary, graph,
    label codec and metrics.json; summary.json aggregates all seeds.

    Example:
        mol2adr train --epochs 20 --seeds 1,2 -o runs
    """
    setup_logging(verbose)
    try:
        from .core import Mol2AdrPipeline

        parsed_seeds = None
        if seeds is not None:
            parsed_seeds = tuple(int(s) for s in seeds.split(",") if s.strip())
        cfg = _resolve(
            config_file,
            dataset=str(dataset) if dataset else None,
            output_dir=str(output_dir) if output_dir else None,
            epochs=epochs,
            seeds=parsed_seeds,
            d_model=d_model,
            batch_size=batch_size,
            feature_mode=feature_mode,
            fragmenter=fragmenter,
            float_width=float_width,
            prune_threshold=prune,
            raw_features=raw_features,
            sinusoidal_pos=sinusoidal_pos,
            allow_duplicates=allow_duplicates,
        )
        Mol2AdrPipeline(cfg).run()
    except Exception as e:
        _fail(e, verbose)


@app.command()
def predict(
    run_dir: Path = typer.Argument(..., help="Run directory written by train"),
    verbose: bool = typer.Option(False, "--verbose", help="Enable verbose logging"),
):
    """
    Generate ADR labels for each SMILES read from standard input.

    Writes one comma-separated label list per input line; a line that cannot
    be parsed yields an empty list and an error on standard error.

    Example:
        echo "CC(=O)Oc1ccccc1C(=O)O" | mol2adr predict runs/seed1
    """
    setup_logging(verbose)
    try:
        from .core import Predictor
        from .dataset import DatasetRecord, query_id

        predictor = Predictor.from_run_dir(run_dir)
        failed = 0
        for k, smiles in enumerate(_stdin_lines()):
            try:
                drug = predictor.prepare(DatasetRecord(query_id(k), smiles, ()))
                typer.echo(",".join(predictor.predict([drug])[0]))
            except Mol2AdrError as e:
                console.print(f"[red]Error:[/red] line {k + 1}: {e}")
                typer.echo("")
                failed += 1
        if failed:
            raise typer.Exit(code=2)
    except typer.Exit:
        raise
    except Exception as e:
        _fail(e, verbose)


def _read_label_lines(path: Path) -> List[set]:
    if not path.exists():
        raise FileNotFoundError(f"Label file not found: {path}")
    lines = read_lines(path)
    return [{lab.strip() for lab in line.split(",") if lab.strip()} for line in lines]


@app.command("eval")
def eval_cmd(
    predictions: Path = typer.Argument(..., help="One comma-separated label list per line"),
    truths: Path = typer.Argument(..., help="Ground truth in the same layout"),
    output: Path = typer.Option("metrics.json", "--output", "-o", help="Metrics file"),
    run_dir: Optional[Path] = typer.Option(
        None, "--run", help="Run directory whose seed and config hash the metrics record"
    ),
    verbose: bool = typer.Option(False, "--verbose", help="Enable verbose logging"),
):
    """
    Score predicted label lists against the truth with set-level matching.

    With --run, the seed and config hash are taken from that run's checkpoint.

    Example:
        mol2adr eval predicted.txt truth.txt --run runs/seed1 -o metrics.json
    """
    setup_logging(verbose)
    try:
        report = evaluate(_read_label_lines(predictions), _read_label_lines(truths))
        seed, cfg_hash = None, None
        if run_dir is not None:
            from .checkpoint import load_checkpoint
            from .core import CHECKPOINT_NAME

            _, meta = load_checkpoint(run_dir / CHECKPOINT_NAME)
            seed, cfg_hash = meta.get("seed"), meta.get("config_hash")
        data = {"seed": seed, "config_hash": cfg_hash, **report.to_dict()}
        output.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        console.print(
            f"[green][OK][/green] P {report.precision:.4f}  R {report.recall:.4f}  "
            f"F1 {report.f1:.4f}"
        )
    except Exception as e:
        _fail(e, verbose)


@app.command()
def explain(
    run_dir: Path = typer.Argument(..., help="Run directory written by train"),
    drug_id: str = typer.Argument(..., help="Drug to explain"),
    dataset: Optional[Path] = typer.Option(
        None, "--dataset", "-d", help="Dataset holding the drug (default: the run's dataset)"
    ),
    output: Path = typer.Option("contrib.csv", "--output", "-o", help="Contribution CSV"),
    joint: bool = typer.Option(False, "--joint", help="Also report all motifs masked together"),
    verbose: bool = typer.Option(False, "--verbose", help="Enable verbose logging"),
):
    """
    Write per-motif contribution scores for one drug's labels.

    Example:
        mol2adr explain runs/seed1 aspirin -o contrib.csv
    """
    setup_logging(verbose)
    try:
        from .core import Predictor
        from .errors import UnknownDrug
        from .explain import contribution_analysis

        predictor = Predictor.from_run_dir(run_dir)
        records = load_dataset(dataset or predictor.config.dataset_path).by_id()
        if drug_id not in records:
            raise UnknownDrug(f"drug {drug_id!r} is not in the dataset")
        matrix = contribution_analysis(predictor, predictor.prepare(records[drug_id]), joint=joint)
        matrix.write_csv(output, predictor)
        console.print(
            f"[green][OK][/green] {len(matrix.motif_indices)} motifs x "
            f"{len(matrix.label_ids)} labels written to {output}"
        )
        if matrix.joint is not None:
            summed = matrix.scores.sum(axis=0)
            for label, both, total in zip(matrix.label_ids, matrix.joint, summed):
                console.print(
                    f"  {predictor.codec.decode(label)}: joint {both:.4f}, "
                    f"sum of single {total:.4f}"
                )
    except Exception as e:
        _fail(e, verbose)


@app.command()
def selftest(
    verbose: bool = typer.Option(False, "--verbose", help="Enable verbose logging"),
):
    """
    Run the gradient and oracle checks; exits nonzero when any fails.

    Example:
        mol2adr selftest
    """
    setup_logging(verbose)
    from .selftest import run_selftest

    results = run_selftest()
    for r in results:
        mark = "[green][OK][/green]" if r.passed else "[red][FAIL][/red]"
        console.print(f"{mark} {r.name} {r.detail}")
    failed = [r for r in results if not r.passed]
    if failed:
        console.print(f"[red]{len(failed)} of {len(results)} checks failed[/red]")
        raise typer.Exit(code=3)
    console.print(f"[bold green]All {len(results)} checks passed[/bold green]")


@app.command("config")
def config_cmd(
    config_file: Optional[Path] = typer.Option(None, "--config", "-c", help="key = value file"),
    show: bool = typer.Option(True, "--show", help="Print the resolved configuration"),
):
    """
    Print the resolved configuration in the config file format.

    Example:
        mol2adr config --show -c my.cfg
    """
    try:
        cfg = load_config(config_file)
        if show:
            typer.echo(format_config(cfg), nl=False)
    except Exception as e:
        _fail(e)


def run() -> None:
    """Console entry point: usage errors exit 1, data errors 2, numeric failures 3."""
    try:
        code = app(standalone_mode=False)
    except click_exceptions.UsageError as e:
        e.show()
        sys.exit(1)
    except click_exceptions.ClickException as e:
        e.show()
        sys.exit(1)
    except click_exceptions.Abort:
        sys.exit(1)
    sys.exit(code or 0)


if __name__ == "__main__":
    run()
