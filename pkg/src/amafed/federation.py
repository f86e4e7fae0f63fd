"""Round-based federated training: local training, evaluation, adaptive (or
FedAvg) weighting, aggregation and per-round reporting."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from amafed import aggregator
from amafed.config import ExperimentConfig, PoisonSpec, to_document
from amafed.dataio import (
    ClientSplit,
    DatasetTable,
    apply_scaler,
    dirichlet_partition,
    fit_scaler,
    load_csv,
    synth_generate,
    train_test_split,
)
from amafed.losses import global_loss, one_hot, rarity_scores, raw_hybrid_loss
from amafed.metafeat import (
    MetaFeatures,
    PerfMetrics,
    evaluate_client,
    extract_meta_features,
    perf_from_predictions,
    score_data,
    score_perf,
)
from amafed.metrics import classification_metrics, confusion, ecdf, fleet_stats
from amafed.model import (
    Architecture,
    ModelParams,
    TrainingError,
    forward,
    init_params,
    predict,
    train_local,
)

logger = logging.getLogger(__name__)


def derive_seed(*parts: int) -> int:
    """Stable 63-bit seed from integer parts; the same parts always give the same seed."""
    state = np.random.SeedSequence([int(p) for p in parts]).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


@dataclass
class ClientState:
    client_id: int
    split: ClientSplit
    seed: int
    attack: str | None = None
    params: ModelParams | None = None
    meta: MetaFeatures | None = None
    perf: PerfMetrics | None = None
    local_loss: float | None = None


@dataclass
class ClientUpdate:
    client_id: int
    params: ModelParams
    loss_history: list[float]
    perf: PerfMetrics
    meta: MetaFeatures
    local_loss: float


@dataclass
class ClientRecord:
    client_id: int
    n_train: int
    n_val: int
    weight: float
    u: float | None
    w_init: float | None
    w_refined: float | None
    f1: float | None
    f2: float | None
    rarity: float
    train_loss: float
    local_loss: float
    val_metrics: PerfMetrics
    meta: MetaFeatures
    fleet_metrics: dict

    def to_dict(self) -> dict:
        return {
            "client_id": self.client_id,
            "n_train": self.n_train,
            "n_val": self.n_val,
            "f1": self.f1,
            "f2": self.f2,
            "u": self.u,
            "w_init": self.w_init,
            "w_refined": self.w_refined,
            "w_final": self.weight,
            "rarity": self.rarity,
            "train_loss": self.train_loss,
            "local_loss": self.local_loss,
            "val_metrics": self.val_metrics.to_dict(),
            "meta_features": self.meta.to_dict(),
            "fleet_metrics": self.fleet_metrics,
        }


@dataclass
class RoundReport:
    round: int
    mode: str
    clients: list[ClientRecord]
    fleet: dict
    global_loss: float
    test_metrics: dict | None = None
    wall_time: float = 0.0

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.clients])

    @property
    def fleet_f1(self) -> list[float]:
        return [c.fleet_metrics["f1"] for c in self.clients]

    def to_dict(self) -> dict:
        # wall_time is deliberately left out: serialised results must be
        # byte-identical across reruns.
        return {
            "round": self.round,
            "mode": self.mode,
            "global_loss": self.global_loss,
            "fleet": self.fleet,
            "test_metrics": self.test_metrics,
            "clients": [c.to_dict() for c in self.clients],
        }


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rounds: list[RoundReport]
    final_params: ModelParams
    rounds_to_target: int | None
    test_table: DatasetTable | None = field(default=None, repr=False)

    def to_dict(self, params_ref: str = "params.json") -> dict:
        return {
            "config": to_document(self.config),
            "rounds_to_target": self.rounds_to_target,
            "final_params_ref": params_ref,
            "rounds": [r.to_dict() for r in self.rounds],
        }


def apply_poisoning(client: ClientState, attack: str) -> ClientState:
    """label_flip relabels the training split by c -> (c+1) mod C up front;
    sign_flip marks the client so its outgoing parameters are negated."""
    if attack == "label_flip":
        train = client.split.train
        flipped = DatasetTable(
            train.features,
            (train.labels + 1) % train.n_classes,
            train.class_names,
            train.row_ids,
        )
        split = ClientSplit(client.client_id, flipped, client.split.val)
        return replace(client, split=split, attack=attack)
    if attack == "sign_flip":
        return replace(client, attack=attack)
    raise ValueError(f"unknown attack {attack!r}")


def poison_outgoing(params: ModelParams, attack: str | None) -> ModelParams:
    if attack == "sign_flip":
        return ModelParams(-params.theta, params.arch)
    return params


def make_clients(
    splits: list[ClientSplit], master_seed: int, poison: PoisonSpec | None = None
) -> list[ClientState]:
    clients = [ClientState(s.client_id, s, derive_seed(master_seed, s.client_id)) for s in splits]
    if poison is not None:
        for cid in poison.clients:
            if not 0 <= cid < len(clients):
                raise ValueError(f"poisoned client id {cid} out of range")
            clients[cid] = apply_poisoning(clients[cid], poison.attack)
    return clients


def _eval_table(split: ClientSplit) -> DatasetTable:
    return split.val if len(split.val) else split.train


def _client_task(
    global_params: ModelParams,
    client: ClientState,
    cfg: ExperimentConfig,
    t: int,
    global_hist: np.ndarray,
) -> ClientUpdate:
    train_cfg = replace(
        cfg.train,
        weight_decay=cfg.loss.alpha,
        seed=derive_seed(client.seed, t),
    )
    lr = cfg.train.lr + (t - 1) * cfg.train.lr_epsilon
    params, history = train_local(global_params, client.split, train_cfg, lr=lr)
    params = poison_outgoing(params, client.attack)
    val = client.split.val
    perf = evaluate_client(params, val, previous=client.perf)
    if len(val):
        probs = forward(params, val.features)
        local_loss = raw_hybrid_loss(one_hot(val.labels, val.n_classes), probs, cfg.train.lam)
    else:
        local_loss = history[-1]
    meta = extract_meta_features(client.split.train, global_hist, cfg.data.normal_class)
    return ClientUpdate(client.client_id, params, history, perf, meta, local_loss)


def run_round(
    global_params: ModelParams,
    clients: list[ClientState],
    cfg: ExperimentConfig,
    t: int,
    workers: int = 1,
    test_table: DatasetTable | None = None,
) -> tuple[ModelParams, RoundReport]:
    """One federated round. Client work may run on ``workers`` threads; the
    aggregation below only starts once every client has reported."""
    if t < 1:
        raise ValueError("rounds are numbered from 1")
    started = time.perf_counter()
    global_hist = np.sum([c.split.train.class_histogram() for c in clients], axis=0)

    def task(client):
        try:
            return _client_task(global_params, client, cfg, t, global_hist)
        except TrainingError as exc:
            raise TrainingError(
                f"round {t}, client {client.client_id}: {exc}", client.client_id, exc.epoch
            ) from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            updates = list(pool.map(task, clients))
    else:
        updates = [task(c) for c in clients]

    histograms = np.array([c.split.train.class_histogram() for c in clients])
    rarity = rarity_scores(histograms)
    sizes = np.array([len(c.split.train) for c in clients])
    losses = np.array([u.local_loss for u in updates])

    if cfg.federation.mode == "fedavg":
        weights = aggregator.fedavg_weights(sizes)
        trace = None
        f1s = f2s = [None] * len(clients)
    else:
        f1s = [score_data(u.meta) for u in updates]
        f2s = [score_perf(u.perf) for u in updates]
        trace = aggregator.amafed_weights(f1s, f2s, rarity, cfg.meta, cfg.loss.beta)
        weights = trace.w_final

    new_global = aggregator.aggregate([u.params for u in updates], weights)
    g_loss = global_loss(
        weights, losses, new_global.theta, rarity, cfg.loss.alpha, cfg.loss.beta
    )

    records = []
    for k, (client, update) in enumerate(zip(clients, updates)):
        client.params = update.params
        client.perf = update.perf
        client.meta = update.meta
        client.local_loss = update.local_loss
        table = _eval_table(client.split)
        fleet_perf = perf_from_predictions(
            predict(new_global, table.features), table.labels, table.n_classes
        )
        records.append(
            ClientRecord(
                client_id=client.client_id,
                n_train=len(client.split.train),
                n_val=len(client.split.val),
                weight=float(weights[k]),
                u=None if trace is None else float(trace.u[k]),
                w_init=None if trace is None else float(trace.w_init[k]),
                w_refined=None if trace is None else float(trace.w_refined[k]),
                f1=None if f1s[k] is None else float(f1s[k]),
                f2=None if f2s[k] is None else float(f2s[k]),
                rarity=float(rarity[k]),
                train_loss=float(update.loss_history[-1]),
                local_loss=float(update.local_loss),
                val_metrics=update.perf,
                meta=update.meta,
                fleet_metrics=fleet_perf.to_dict(),
            )
        )

    stats = fleet_stats([r.fleet_metrics["f1"] for r in records])
    fleet = {**stats.to_dict(), "values": list(stats.values)}
    test_metrics = None
    if test_table is not None and len(test_table):
        cm = confusion(predict(new_global, test_table.features), test_table.labels,
                       test_table.n_classes)
        scores = classification_metrics(cm)
        # Per-class recall stands in for per-attack accuracy; null for absent classes.
        recall = [None if np.isnan(v) else float(v) for v in scores.per_class_recall]
        test_metrics = {**scores.summary(), "per_class_recall": recall}

    report = RoundReport(
        round=t,
        mode=cfg.federation.mode,
        clients=records,
        fleet=fleet,
        global_loss=g_loss,
        test_metrics=test_metrics,
        wall_time=time.perf_counter() - started,
    )
    logger.info("round %d: fleet mean F1 %.4f, min %.4f", t, stats.mean, stats.minimum)
    return new_global, report


def load_data(cfg: ExperimentConfig) -> DatasetTable:
    data = cfg.data
    if data.source == "synthetic":
        s = data.synthetic
        seed = cfg.seed if s.seed is None else s.seed
        return synth_generate(s.n_classes, s.n_samples, s.dim, s.separation, s.priors, seed)
    return load_csv(data.source, data.label_column)


def prepare_clients(
    data: DatasetTable, cfg: ExperimentConfig
) -> tuple[list[ClientState], DatasetTable]:
    """80/20-style split, min-max scaling fit on the training part, then the
    Dirichlet partition of the training part across clients."""
    train_part, test_part = train_test_split(data, cfg.data.train_ratio, seed=cfg.seed)
    scaler = fit_scaler(train_part)
    train_part = apply_scaler(scaler, train_part)
    test_part = apply_scaler(scaler, test_part)
    splits = dirichlet_partition(train_part, cfg.partition.spec(cfg.seed))
    return make_clients(splits, cfg.seed, cfg.federation.poison), test_part


def architecture_for(cfg: ExperimentConfig, data: DatasetTable) -> Architecture:
    dims = (data.n_features, *cfg.model.hidden, data.n_classes)
    return Architecture(dims, cfg.model.activation)


def rounds_to_target(reports: list[RoundReport], target: float) -> int | None:
    for report in reports:
        if report.fleet["mean"] >= target:
            return report.round
    return None


def run_experiment(
    cfg: ExperimentConfig, data: DatasetTable | None = None, workers: int = 1
) -> ExperimentResult:
    if data is None:
        data = load_data(cfg)
    clients, test_part = prepare_clients(data, cfg)
    params = init_params(architecture_for(cfg, data), derive_seed(cfg.seed, 2**31 - 1))
    reports = []
    for t in range(1, cfg.federation.rounds + 1):
        params, report = run_round(params, clients, cfg, t, workers, test_part)
        reports.append(report)
    return ExperimentResult(
        cfg,
        reports,
        params,
        rounds_to_target(reports, cfg.federation.target_f1),
        test_part,
    )


def _as_dict(result) -> dict:
    return result.to_dict() if isinstance(result, ExperimentResult) else result


def compare_runs(result_a, result_b) -> dict:
    """Per-round deltas (a − b) of fleet mean, worst-client and 5th-percentile
    F1, plus final-round ECDFs for both runs."""
    a, b = _as_dict(result_a), _as_dict(result_b)
    rounds_a, rounds_b = a["rounds"], b["rounds"]
    if len(rounds_a) != len(rounds_b):
        raise ValueError(f"round counts differ: {len(rounds_a)} vs {len(rounds_b)}")
    if len(rounds_a[0]["clients"]) != len(rounds_b[0]["clients"]):
        raise ValueError("client counts differ")
    rows = []
    for ra, rb in zip(rounds_a, rounds_b):
        fa, fb = ra["fleet"], rb["fleet"]
        rows.append(
            {
                "round": ra["round"],
                "mean_a": fa["mean"],
                "mean_b": fb["mean"],
                "delta_mean": fa["mean"] - fb["mean"],
                "min_a": fa["min"],
                "min_b": fb["min"],
                "delta_min": fa["min"] - fb["min"],
                "p5_a": fa["p5"],
                "p5_b": fb["p5"],
                "delta_p5": fa["p5"] - fb["p5"],
            }
        )
    return {
        "rows": rows,
        "ecdf_a": ecdf(rounds_a[-1]["fleet"]["values"]),
        "ecdf_b": ecdf(rounds_b[-1]["fleet"]["values"]),
    }
