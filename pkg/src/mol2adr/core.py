"""Core training and prediction pipeline for mol2adr."""

import json
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from rich.console import Console
from rich.progress import Progress, SpinnerColumn, TextColumn

from . import autodiff as ad
from .autodiff import Tape
from .codec import PAD, LabelCodec, build_codec, clean_sequence, encode_targets
from .config import RunConfig, format_config, load_config
from .dataset import (
    QUERY_PREFIX,
    DatasetRecord,
    Split,
    load_dataset,
    load_structure,
    query_id,
    split_dataset,
)
from .errors import ChemError, Mol2AdrError, NonFiniteLoss, TooFewRecords
from .featurize import (
    FeatureStats,
    MolecularGraphTensors,
    compute_feature_stats,
    featurize_molecule,
    standardize,
    truncate_graph,
)
from .fragment import BricsRuleTable, Fragmentation, fragment, load_rules
from .metrics import MetricsReport, evaluate, summarize
from .model import AdrGenerator, Memory, ModelDims
from .motif_graph import (
    AssociationGraph,
    CorpusMolecule,
    MotifVocabulary,
    attach_query_molecule,
    build_association_graph,
    build_vocabulary,
)
from .optim import Adam, CosineSchedule, cosine_lr
from .perception import PerceivedMolecule, perceive

logger = logging.getLogger(__name__)
console = Console(stderr=True)

CHECKPOINT_NAME = "model.m2ad"


@dataclass
class PreparedDrug:
    """A record after parsing, perception, fragmentation and featurization."""

    record: DatasetRecord
    molecule: PerceivedMolecule
    fragmentation: Fragmentation
    features: MolecularGraphTensors

    @property
    def drug_id(self) -> str:
        return self.record.drug_id

    def corpus_entry(self) -> CorpusMolecule:
        return CorpusMolecule.from_fragmentation(self.drug_id, self.fragmentation)


def prepare_drug(
    record: DatasetRecord,
    rules: Optional[BricsRuleTable] = None,
    fragmenter: str = "brics",
    base_dir: Optional[Path] = None,
) -> PreparedDrug:
    pmol = perceive(load_structure(record, base_dir))
    return PreparedDrug(record, pmol, fragment(pmol, rules, fragmenter), featurize_molecule(pmol))


def prepare_drugs(
    records: Sequence[DatasetRecord],
    rules: Optional[BricsRuleTable] = None,
    fragmenter: str = "brics",
    base_dir: Optional[Path] = None,
    workers: int = 4,
) -> List[PreparedDrug]:
    """Prepare records concurrently, keeping input order.

    Records whose structure cannot be read are logged and left out.
    """
    rules = rules if rules is not None or fragmenter != "brics" else load_rules()
    results: List[Optional[PreparedDrug]] = [None] * len(records)
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        console=console,
        transient=True,
    ) as progress:
        task = progress.add_task("Preparing molecules...", total=len(records))
        with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
            futures = {
                executor.submit(prepare_drug, rec, rules, fragmenter, base_dir): (i, rec.drug_id)
                for i, rec in enumerate(records)
            }
            for future in as_completed(futures):
                idx, drug_id = futures[future]
                try:
                    results[idx] = future.result()
                except (ChemError, FileNotFoundError, ValueError) as e:
                    logger.warning(f"Skipping drug {drug_id!r}: {e}")
                progress.advance(task)
    prepared = [r for r in results if r is not None]
    if len(prepared) < len(records):
        console.print(
            f"[yellow][WARN][/yellow] {len(records) - len(prepared)} of {len(records)} "
            "records could not be prepared"
        )
    return prepared


def model_input(
    features: MolecularGraphTensors,
    stats: Optional[FeatureStats],
    max_atoms: int,
    name: str = "",
) -> MolecularGraphTensors:
    """Standardize (unless ``stats`` is None) and truncate to ``max_atoms``."""
    graph = standardize(features, stats) if stats is not None else features
    return truncate_graph(graph, max_atoms, name)


@dataclass
class Artifacts:
    """Everything derived from the training split that the model consumes.

    ``graph`` is the training association graph with every held-out drug
    attached as a receive-only query node.
    """

    split: Split
    vocab: MotifVocabulary
    train_graph: AssociationGraph
    graph: AssociationGraph
    codec: LabelCodec
    stats: Optional[FeatureStats]
    inputs: Dict[str, MolecularGraphTensors]
    records: Dict[str, DatasetRecord]

    def node_ids(self, drug_ids: Sequence[str]) -> List[int]:
        return [self.graph.molecule_node(d) for d in drug_ids]

    def targets(
        self, drug_ids: Sequence[str], cfg: RunConfig, rng: Optional[np.random.Generator] = None
    ) -> np.ndarray:
        rows = [
            encode_targets(self.records[d].labels, self.codec, cfg.max_len, cfg.label_order, rng)
            for d in drug_ids
        ]
        return trim_padding(np.asarray(rows, dtype=np.int64))

    def truth(self, drug_id: str, cfg: RunConfig) -> set:
        """Label ids a prediction is scored against: the kept, in-codec labels."""
        tokens = encode_targets(self.records[drug_id].labels, self.codec, cfg.max_len)
        return clean_sequence(tokens, self.codec)


def trim_padding(tokens: np.ndarray) -> np.ndarray:
    """Drop trailing columns that are PAD in every row."""
    used = np.nonzero((tokens != PAD).any(axis=0))[0]
    return tokens[:, : used[-1] + 1] if used.size else tokens


def build_artifacts(drugs: Sequence[PreparedDrug], split: Split, cfg: RunConfig) -> Artifacts:
    """Vocabulary, graphs, codec and feature statistics from the training split only."""
    by_id = {d.drug_id: d for d in drugs}
    train = [by_id[i] for i in split.train]
    vocab = build_vocabulary([d.corpus_entry() for d in train], cfg.prune_threshold)
    train_graph = build_association_graph([d.corpus_entry() for d in train], vocab)
    graph = train_graph.copy()
    for drug_id in split.valid + split.test:
        counts = by_id[drug_id].corpus_entry().motif_counts
        attach_query_molecule(graph, vocab, counts, drug_id, allow_empty=True)

    codec = build_codec([d.record.labels for d in train], cfg.vocab_size)
    stats = None if cfg.raw_features else compute_feature_stats(d.features for d in train)
    inputs = {
        d.drug_id: model_input(d.features, stats, cfg.max_atoms, d.drug_id) for d in drugs
    }
    logger.info(
        f"Artifacts: {len(vocab)} motifs, {len(codec) - 4} labels, "
        f"{len(split.train)}/{len(split.valid)}/{len(split.test)} drugs"
    )
    return Artifacts(
        split, vocab, train_graph, graph, codec, stats, inputs, {d.drug_id: d.record for d in drugs}
    )


def model_dims(cfg: RunConfig, n_tokens: int, n_motifs: int) -> ModelDims:
    return ModelDims(
        n_tokens=n_tokens,
        n_motifs=n_motifs,
        d_model=cfg.d_model,
        gat_heads=cfg.gat_heads,
        gat_layers=cfg.gat_layers,
        decoder_heads=cfg.decoder_heads,
        num_layers=cfg.num_layers,
        max_len=cfg.max_len,
        max_atoms=cfg.max_atoms,
        dropout=cfg.dropout,
        sinusoidal_pos=cfg.sinusoidal_pos,
        feature_mode=cfg.feature_mode,
    )


def encode(
    model: AdrGenerator,
    graph: AssociationGraph,
    inputs: Sequence[MolecularGraphTensors],
    nodes: Sequence[int],
) -> Memory:
    """Memory for a batch; the association GAT runs over the whole graph."""
    assoc = model.association_embeddings(graph)
    return model.encode_batch(inputs, assoc, nodes)


def generate_labels(
    model: AdrGenerator,
    graph: AssociationGraph,
    inputs: Sequence[MolecularGraphTensors],
    nodes: Sequence[int],
    batch_size: int = 64,
    allow_duplicates: bool = False,
) -> List[List[int]]:
    """Greedy label ids for each drug, in input order."""
    assoc = model.association_embeddings(graph)
    outputs: List[List[int]] = []
    for start in range(0, len(inputs), batch_size):
        batch = list(inputs[start : start + batch_size])
        memory = model.encode_batch(batch, assoc, nodes[start : start + batch_size])
        outputs.extend(model.generate(memory, allow_duplicates=allow_duplicates))
    return outputs


def score(
    model: AdrGenerator, artifacts: Artifacts, drug_ids: Sequence[str], cfg: RunConfig
) -> MetricsReport:
    if not drug_ids:
        return MetricsReport(0, 0, 0)
    predicted = generate_labels(
        model,
        artifacts.graph,
        [artifacts.inputs[d] for d in drug_ids],
        artifacts.node_ids(drug_ids),
        cfg.batch_size,
        cfg.allow_duplicates,
    )
    return evaluate([set(p) for p in predicted], [artifacts.truth(d, cfg) for d in drug_ids])


@dataclass
class TrainResult:
    model: AdrGenerator
    best_epoch: int
    best_valid_f1: float
    initial_loss: float
    history: List[Dict] = field(default_factory=list)


def _dump_non_finite(run_dir: Optional[Path], info: Dict, model: AdrGenerator) -> None:
    info["param_max_abs"] = {
        name: float(np.abs(t.data).max()) for name, t in zip(model.params.names(), model.params)
    }
    if run_dir is not None:
        path = run_dir / "nan_dump.json"
        path.write_text(json.dumps(info, indent=2, sort_keys=True), encoding="utf-8")
        logger.error(f"Non-finite loss; diagnostics written to {path}")


def train_model(
    cfg: RunConfig, artifacts: Artifacts, seed: int, run_dir: Optional[Path] = None
) -> TrainResult:
    """Teacher-forced training with Adam and a cosine learning rate.

    The parameters with the best validation F1 are kept (and written to
    ``run_dir`` when given).

    Raises:
        NonFiniteLoss: If a batch loss is NaN or infinite
    """
    ad.set_float_width(cfg.float_width)
    model = AdrGenerator(model_dims(cfg, len(artifacts.codec), len(artifacts.vocab)), seed)
    optimizer = Adam(list(model.params))
    order_rng = np.random.default_rng([seed, 1])
    dropout_rng = np.random.default_rng([seed, 2])
    label_rng = np.random.default_rng([seed, 3])
    train_ids = list(artifacts.split.train)
    n_batches = -(-len(train_ids) // cfg.batch_size)
    schedule = CosineSchedule(max(1, cfg.epochs * n_batches), cfg.lr_max, cfg.lr_min)
    ctx = model.context(training=True, rng=dropout_rng)

    best = {"f1": -1.0, "epoch": -1, "arrays": model.params.to_arrays()}
    history: List[Dict] = []
    initial_loss = float("nan")
    step = 0
    log_path = run_dir / "train_log.jsonl" if run_dir is not None else None
    if log_path is not None:
        log_path.write_text("", encoding="utf-8")

    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        console=console,
        transient=True,
    ) as progress:
        task = progress.add_task(f"Training seed {seed}...", total=cfg.epochs)
        for epoch in range(cfg.epochs):
            permutation = order_rng.permutation(len(train_ids))
            losses = []
            for start in range(0, len(train_ids), cfg.batch_size):
                batch = [train_ids[i] for i in permutation[start : start + cfg.batch_size]]
                targets = artifacts.targets(batch, cfg, label_rng)
                optimizer.zero_grad()
                with Tape() as tape:
                    assoc = model.association_embeddings(artifacts.graph)
                    memory = model.encode_batch(
                        [artifacts.inputs[d] for d in batch], assoc, artifacts.node_ids(batch)
                    )
                    loss = model.loss(targets, memory, ctx)
                value = loss.item()
                if not np.isfinite(value):
                    _dump_non_finite(
                        run_dir, {"seed": seed, "epoch": epoch, "step": step, "drugs": batch},
                        model,
                    )
                    raise NonFiniteLoss(f"loss became {value} at epoch {epoch}, step {step}")
                if step == 0:
                    initial_loss = value
                ad.backward(loss, tape, model.params)
                optimizer.step(cosine_lr(step, schedule))
                step += 1
                losses.append(value)

            valid = score(model, artifacts, artifacts.split.valid, cfg)
            entry = {
                "epoch": epoch,
                "loss": round(float(np.mean(losses)), 6),
                "lr": round(cosine_lr(min(step, schedule.total_steps), schedule), 8),
                "valid_f1": round(valid.f1, 6),
            }
            history.append(entry)
            if log_path is not None:
                with log_path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, sort_keys=True) + "\n")
            logger.debug(f"Epoch {epoch}: loss {entry['loss']:.4f}, valid F1 {valid.f1:.4f}")
            if valid.f1 > best["f1"]:
                best = {"f1": valid.f1, "epoch": epoch, "arrays": model.params.to_arrays()}
            progress.update(task, description=f"Seed {seed} epoch {epoch + 1}/{cfg.epochs}")
            progress.advance(task)

    model.params.load_arrays(best["arrays"])
    return TrainResult(model, best["epoch"], max(best["f1"], 0.0), initial_loss, history)


class Mol2AdrPipeline:
    """Split, prepare, train and evaluate a dataset for one or more seeds."""

    def __init__(self, config: RunConfig, output_dir: Optional[str] = None):
        """
        Initialize the pipeline.

        Args:
            config: Resolved run configuration
            output_dir: Directory for run outputs (default: ``config.output_dir``)
        """
        self.config = config
        self.dataset_path = Path(config.dataset_path).resolve()
        self.output_dir = Path(output_dir or config.output_dir).resolve()

        if not self.dataset_path.exists():
            raise FileNotFoundError(f"Dataset not found: {self.dataset_path}")

        self.output_dir.mkdir(parents=True, exist_ok=True)
        self._drugs: Optional[List[PreparedDrug]] = None

    def prepare(self) -> List[PreparedDrug]:
        """Load and prepare every record once; reused across seeds."""
        if self._drugs is None:
            dataset = load_dataset(self.dataset_path)
            rules = load_rules(self.config.rules) if self.config.fragmenter == "brics" else None
            self._drugs = prepare_drugs(
                dataset.records,
                rules,
                self.config.fragmenter,
                self.dataset_path.parent,
                self.config.workers,
            )
            console.print(f"[green][OK][/green] Prepared {len(self._drugs)} molecules")
        return self._drugs

    def run_seed(self, seed: int) -> MetricsReport:
        """Split, train and test with one seed; writes the run directory."""
        cfg = self.config
        drugs = self.prepare()
        if len(drugs) < 10:
            raise TooFewRecords(f"only {len(drugs)} usable records; at least 10 are needed")
        run_dir = self.output_dir / f"seed{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)

        try:
            split = split_dataset([d.record for d in drugs], seed)
            artifacts = build_artifacts(drugs, split, cfg)
            save_artifacts(artifacts, cfg, run_dir)
            result = train_model(cfg, artifacts, seed, run_dir)
            result.model.save(
                run_dir / CHECKPOINT_NAME,
                {"seed": seed, "config_hash": cfg.hash(), "epoch": result.best_epoch},
            )
            report = score(result.model, artifacts, split.test, cfg)
        except Mol2AdrError as e:
            logger.error(f"Seed {seed} failed: {e}")
            e.seed = seed
            raise

        write_metrics(run_dir / "metrics.json", report, seed, cfg.hash())
        console.print(
            f"[green][OK][/green] Seed {seed}: P {report.precision:.4f}  R {report.recall:.4f}  "
            f"F1 {report.f1:.4f} (best epoch {result.best_epoch})"
        )
        return report

    def run(self) -> Dict[str, Dict]:
        """Run every configured seed and write ``summary.json``."""
        console.print("\n[bold cyan]mol2adr training[/bold cyan]")
        console.print(f"Dataset: {self.dataset_path}")
        console.print(f"Output: {self.output_dir}")
        console.print(f"Config hash: {self.config.hash()}\n")

        reports = [self.run_seed(seed) for seed in self.config.seeds]
        summary = summarize(reports)
        data = {
            "config_hash": self.config.hash(),
            "seeds": list(self.config.seeds),
            "metrics": {
                name: {"mean": round(s.mean, 6), "std": round(s.std, 6),
                       "values": [round(v, 6) for v in s.values]}
                for name, s in summary.items()
            },
        }
        (self.output_dir / "summary.json").write_text(
            json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        console.print("\n[bold green]Training complete![/bold green]")
        for name, s in summary.items():
            console.print(f"  {name:<9} {s}")
        return data


def write_metrics(path: Path, report: MetricsReport, seed: Optional[int], cfg_hash: str) -> None:
    data = {"seed": seed, "config_hash": cfg_hash, **report.to_dict()}
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def save_artifacts(artifacts: Artifacts, cfg: RunConfig, run_dir: Path) -> None:
    """Write the files a :class:`Predictor` needs next to the checkpoint."""
    artifacts.vocab.save(run_dir / "vocab.jsonl")
    artifacts.train_graph.save(run_dir / "graph.json")
    artifacts.codec.save(run_dir / "codec.json")
    (run_dir / "config.txt").write_text(format_config(cfg), encoding="utf-8")
    stats = artifacts.stats.to_dict() if artifacts.stats is not None else None
    (run_dir / "feature_stats.json").write_text(json.dumps(stats, sort_keys=True), encoding="utf-8")
    split = {"seed": artifacts.split.seed, "train": list(artifacts.split.train),
             "valid": list(artifacts.split.valid), "test": list(artifacts.split.test)}
    (run_dir / "split.json").write_text(json.dumps(split, indent=2), encoding="utf-8")


class Predictor:
    """A trained run directory, ready to score new molecules."""

    def __init__(
        self,
        model: AdrGenerator,
        config: RunConfig,
        vocab: MotifVocabulary,
        graph: AssociationGraph,
        codec: LabelCodec,
        stats: Optional[FeatureStats],
    ):
        self.model = model
        self.config = config
        self.vocab = vocab
        self.graph = graph
        self.codec = codec
        self.stats = stats
        self.rules = load_rules(config.rules) if config.fragmenter == "brics" else None

    @classmethod
    def from_run_dir(cls, run_dir: Path) -> "Predictor":
        run_dir = Path(run_dir)
        if not (run_dir / CHECKPOINT_NAME).exists():
            raise FileNotFoundError(f"No checkpoint in {run_dir}")
        config = load_config(run_dir / "config.txt")
        ad.set_float_width(config.float_width)
        model, meta = AdrGenerator.load(run_dir / CHECKPOINT_NAME)
        stats_data = json.loads((run_dir / "feature_stats.json").read_text(encoding="utf-8"))
        stats = FeatureStats.from_dict(stats_data) if stats_data is not None else None
        logger.debug(f"Loaded checkpoint {meta.get('config_hash')} from {run_dir}")
        return cls(
            model,
            config,
            MotifVocabulary.load(run_dir / "vocab.jsonl"),
            AssociationGraph.load(run_dir / "graph.json"),
            LabelCodec.load(run_dir / "codec.json"),
            stats,
        )

    def prepare(self, record: DatasetRecord) -> PreparedDrug:
        return prepare_drug(record, self.rules, self.config.fragmenter)

    def attach(self, drugs: Sequence[PreparedDrug]) -> AssociationGraph:
        """Copy of the training graph with ``drugs`` attached.

        Training drugs reuse their node; query ids always get a fresh one.
        """
        graph = self.graph.copy()
        for drug in drugs:
            if drug.drug_id.startswith(QUERY_PREFIX) or not graph.has_molecule(drug.drug_id):
                attach_query_molecule(
                    graph, self.vocab, drug.corpus_entry().motif_counts, drug.drug_id,
                    allow_empty=True,
                )
        return graph

    def inputs(self, drug: PreparedDrug) -> MolecularGraphTensors:
        return model_input(drug.features, self.stats, self.config.max_atoms, drug.drug_id)

    def predict(self, drugs: Sequence[PreparedDrug]) -> List[List[str]]:
        """Label names generated for each drug."""
        if not drugs:
            return []
        graph = self.attach(drugs)
        ids = generate_labels(
            self.model,
            graph,
            [self.inputs(d) for d in drugs],
            [graph.molecule_node(d.drug_id) for d in drugs],
            self.config.batch_size,
            self.config.allow_duplicates,
        )
        return [[self.codec.decode(t) for t in row] for row in ids]

    def predict_smiles(self, smiles: Sequence[str]) -> List[List[str]]:
        records = [DatasetRecord(query_id(i), s, ()) for i, s in enumerate(smiles)]
        return self.predict([self.prepare(r) for r in records])
