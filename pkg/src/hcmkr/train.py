"""Data loading, the training loop, and evaluation of a parameter set."""

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt_io
from . import geometry as geo
from .diff import OptimizerState, adam_step, gradients
from .encoder import Encoder
from .errors import CheckpointError, DataError
from .graph import BipartiteGraph, gen_synthetic, load_interactions, load_item_entities, load_kg, split
from .metrics import evaluate_embeddings, format_table
from .objective import sample_batch
from .params import ModelParams

INTERACTIONS_FILE = "interactions.tsv"
KG_FILE = "kg.tsv"
ITEM_ENTITY_FILE = "item_entity.tsv"
DATASET_FILE = "dataset.cfg"
CHECKPOINT_FILE = "checkpoint.bin"
EPOCH_LOG = "epochs.jsonl"
TIMING_LOG = "timing.tsv"


def read_counts(path):
    """``key = value`` integer counts from a dataset.cfg file."""
    counts = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, raw = line.partition("=")
        try:
            counts[key.strip()] = int(raw)
        except ValueError:
            raise DataError(f"{path}:{lineno}: expected 'key = integer'") from None
    return counts


def write_counts(path, g1, g2):
    Path(path).write_text(
        f"num_users = {g1.num_users}\nnum_items = {g1.num_items}\n"
        f"num_entities = {g2.num_entities}\nnum_relations = {g2.num_relations}\n",
        encoding="utf-8",
    )


def _load_files(inter, kg, item_entities=None, counts=None):
    for p in (inter, kg, item_entities):
        if p and not Path(p).is_file():
            raise DataError(f"missing data file {p}")
    if counts:
        g1 = load_interactions(inter, counts.get("num_users"), counts.get("num_items"))
        g2 = load_kg(kg, counts.get("num_entities"), counts.get("num_relations"),
                     item_entities or None, g1.num_items)
        return g1, g2
    # external user/item ids get densified; the item -> entity map follows them
    g1 = load_interactions(inter)
    n_ext = int(g1.item_ids.max()) + 1 if len(g1.item_ids) else 0
    if item_entities:
        mapping = load_item_entities(item_entities)
        mapping = np.concatenate([mapping, np.full(max(0, n_ext - len(mapping)), -1)])[g1.item_ids]
    else:
        mapping = None
    g2 = load_kg(kg, item_to_entity=mapping, num_items=g1.num_items)
    if mapping is None:
        ext = np.asarray(g1.item_ids)
        g2 = load_kg(kg, g2.num_entities, g2.num_relations,
                     np.where(ext < g2.num_entities, ext, -1), g1.num_items)
    return g1, g2


def load_data(cfg):
    """(interaction graph, knowledge graph) for a RunConfig."""
    if cfg.synthetic:
        return gen_synthetic(cfg.n_users, cfg.n_items, cfg.n_entities, cfg.n_relations,
                             cfg.power_exponent, seed=cfg.data_seed)
    if cfg.data_dir:
        d = Path(cfg.data_dir)
        if not d.is_dir():
            raise DataError(f"data directory {d} does not exist")
        counts = read_counts(d / DATASET_FILE) if (d / DATASET_FILE).is_file() else None
        ie = d / ITEM_ENTITY_FILE
        return _load_files(d / INTERACTIONS_FILE, d / KG_FILE, ie if ie.is_file() else None, counts)
    return _load_files(cfg.interactions, cfg.kg, cfg.item_entities or None)


@dataclass
class Setup:
    """Everything derived deterministically from a config before training."""

    cfg: object
    g1: BipartiteGraph
    g2: object
    data: object  # DatasetSplit
    encoder: Encoder

    def init_params(self, seed=None):
        cfg = self.cfg
        return ModelParams.init(
            self.g1.num_users, self.g1.num_items, self.g2.num_entities, self.g2.num_relations,
            cfg.dim, seed=cfg.seed if seed is None else seed, std=cfg.init_std, c=cfg.init_curvature,
        )


def setup(cfg):
    g1, g2 = load_data(cfg)
    if g2.num_items != g1.num_items:
        raise DataError(f"item-entity map covers {g2.num_items} items, interactions have {g1.num_items}")
    data = split(g1, cfg.train_frac, cfg.valid_frac, cfg.split_seed)
    if data.train.num_edges == 0:
        raise DataError("training split is empty")
    encoder = Encoder(data.train, g2, cfg.encoder_config(), geo.get(cfg.euclidean_ablation))
    return Setup(cfg, g1, g2, data, encoder)


def final_tangent(encoder, params):
    """Deterministic final embeddings (no dropout, no pruning) in tangent coordinates."""
    with torch.no_grad():
        u, i = encoder(params).final(encoder.cfg.layer_combination)
        c = params.c
        return encoder.geometry.log0(u, c), encoder.geometry.log0(i, c)


def evaluate(st, params, which="test", ks=(10, 20)):
    """Metric means on the validation split (train excluded) or the test split
    (train and validation excluded)."""
    u, i = final_tangent(st.encoder, params)
    if which == "valid":
        return evaluate_embeddings(u, i, st.data.train, st.data.valid, ks).means
    if which == "test":
        return evaluate_embeddings(u, i, st.data.observed, st.data.test, ks).means
    raise ValueError(f"unknown split {which!r}")


@dataclass
class TrainResult:
    params: ModelParams
    optimizer: OptimizerState
    epochs_run: int
    initial_loss: float
    history: list = field(default_factory=list)   # per-epoch dicts
    test: dict = field(default_factory=dict)
    valid: dict = field(default_factory=dict)
    stopped_early: bool = False


def _step_seed(seed, epoch, step):
    return int(np.random.SeedSequence([seed, epoch, step]).generate_state(1)[0])


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _metric_key(ks):
    k = 20 if 20 in ks else max(ks)
    return f"recall@{k}"


def train(cfg, out_dir=None, resume=False, log=None):
    """Run the configured training; writes checkpoint, logs and metrics to ``out_dir`` when given."""
    st = setup(cfg)
    ks = cfg.k_list()
    aug, obj = cfg.augmentation(), cfg.objective()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    params = st.init_params()
    opt = OptimizerState.for_params(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    start, history = 0, []
    state = {"best": None, "bad": 0, "initial_loss": None, "stopped": False}
    if resume:
        if out is None or not (out / CHECKPOINT_FILE).is_file():
            raise CheckpointError("nothing to resume: no checkpoint in the output directory")
        ck = ckpt_io.load(out / CHECKPOINT_FILE)
        if ck.config_hash != cfg.model_hash():
            raise CheckpointError("config hash mismatch: checkpoint was trained with a different model/data config")
        params, opt, start, state = ck.params, ck.optimizer, ck.epoch, dict(ck.state)
        opt.lr, opt.beta1, opt.beta2, opt.eps = cfg.lr, cfg.beta1, cfg.beta2, cfg.eps
        log_path = out / EPOCH_LOG
        if log_path.is_file():
            history = [json.loads(x) for x in log_path.read_text().splitlines() if x.strip()]
            history = [h for h in history if h["epoch"] <= start]

    def save():
        if out is None:
            return
        ckpt_io.save(ckpt_io.Checkpoint(params, opt, cfg.model_hash(), cfg.identity(), epoch, state), out / CHECKPOINT_FILE)
        (out / EPOCH_LOG).write_text("".join(json.dumps(h, sort_keys=True) + "\n" for h in history))

    epoch = start
    if out is not None and not resume:
        (out / TIMING_LOG).write_text("epoch\tseconds\n")
        save()
    n_steps = max(1, math.ceil(st.data.train.num_edges / cfg.batch_size))
    key = _metric_key(ks)
    while epoch < cfg.epochs and not state["stopped"]:
        epoch += 1
        t0 = time.perf_counter()
        sums = np.zeros(3)
        for step in range(n_steps):
            s = _step_seed(cfg.seed, epoch, step)
            batch = sample_batch(st.data.train, cfg.batch_size, s)
            report, grads = gradients(params, st.encoder, batch, aug, obj, s)
            if state["initial_loss"] is None:
                state["initial_loss"] = report.L
            sums += (report.L1, report.L2, report.L)
            adam_step(params, grads, opt)
        seconds = time.perf_counter() - t0
        L1, L2, Lj = (sums / n_steps).tolist()
        row = {"epoch": epoch, "L1": L1, "L2": L2, "L": Lj}
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            valid = evaluate(st, params, "valid", ks)
            row["valid"] = valid
            if cfg.patience:
                if state["best"] is None or valid[key] > state["best"]:
                    state["best"], state["bad"] = valid[key], 0
                else:
                    state["bad"] += cfg.eval_every
                    state["stopped"] = state["bad"] >= cfg.patience
        history.append(row)
        if log is not None:
            extra = f"  valid {key}={row['valid'][key]:.4f}" if "valid" in row else ""
            log(f"epoch {epoch:4d}  L1={L1:.5f}  L2={L2:.5f}  L={Lj:.5f}  {seconds:.2f}s{extra}")
        if out is not None:
            with open(out / TIMING_LOG, "a") as fh:
                fh.write(f"{epoch}\t{seconds:.6f}\n")
        save()

    valid = history[-1]["valid"] if history and "valid" in history[-1] else evaluate(st, params, "valid", ks)
    test = evaluate(st, params, "test", ks)
    result = TrainResult(params, opt, epoch, state["initial_loss"], history, test, valid, state["stopped"])
    if out is not None:
        (out / "metrics.tsv").write_text(format_table(test, ks))
        _write_json(out / "metrics.json", {
            "test": test, "valid": valid, "epochs_run": epoch,
            "initial_loss": state["initial_loss"],
            "final_loss": history[-1]["L"] if history else None,
            "stopped_early": state["stopped"],
        })
    return result
