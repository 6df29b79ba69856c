"""Experiment runner: config files, training loops, sweeps, and verification.

A config is a flat key=value text file (# comments allowed); keys are
namespaced per subsystem (data.*, model.*, opt.*, clip.*, scale.*, train.*).
Every numeric output is a pure function of (config, seed): datasets, inits,
and batch orders all derive from one seed tree.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import clip, metrics, models, optim, scaling
from .data import (
    CATEGORICAL,
    Batch,
    Dataset,
    FieldSchema,
    SyntheticSpec,
    generate_synthetic,
    load_criteo_tsv,
    load_dataset,
    make_batches,
    top_k_collapse,
)
from .embedding import EmbeddingTable, init_table
from .models import DenseParams, init_dense_params, model_forward
from .optim import AdamConfig, AdamState, EmbedAdamState, WarmupSchedule


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    # data
    source: str = "synthetic"          # "synthetic", a .npz container, or a Criteo TSV
    n_samples: int = 200_000
    n_dense: int = 2
    n_categorical: int = 6
    vocab_size: int = 10_000
    zipf_exponent: float = 1.2
    uniform_ids: bool = False
    click_strength: float = 1.0
    top_k: int = 0                     # 0 disables the top-k id collapse
    split: float = 0.9
    max_rows: int | None = None
    # model
    model_kind: str = "deepfm"
    hidden: tuple[int, ...] = (400, 400, 400)
    cross_depth: int = 3
    embed_dim: int = 10
    init_sigma: float | None = None    # default: 1e-2 with cowclip, else 1e-4
    # optimizer
    opt_kind: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_dense: float = 1e-4
    lr_embed: float = 1e-4
    l2: float = 1e-4
    warmup_epochs: float = 1.0
    dense_l2: bool = True
    # clipping
    clip_variant: str = "none"
    clip_value: float = 25.0
    clip_r: float = 1.0
    clip_zeta: float = 1e-4
    # scaling
    rule: str = "none"
    base_batch: int = 1024
    clip_mode: str = "sqrt"
    # training
    batch_size: int = 1024
    epochs: int = 10
    # sweep
    sweep_batch_sizes: tuple[int, ...] = ()
    sweep_rules: tuple[str, ...] = ()
    # output
    out_dir: str = "runs"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    def resolved_init_sigma(self) -> float:
        if self.init_sigma is not None:
            return self.init_sigma
        return 1e-2 if self.clip_variant == "cowclip" else 1e-4

    def to_dict(self) -> dict:
        d = {}
        for key, (attr, kind) in _CONFIG_KEYS.items():
            value = getattr(self, attr)
            if kind in ("int_tuple", "str_tuple"):
                value = ",".join(str(v) for v in value)
            d[key] = value
        return d


_CONFIG_KEYS = {
    "data.source": ("source", "str"),
    "data.n_samples": ("n_samples", "int"),
    "data.n_dense": ("n_dense", "int"),
    "data.n_categorical": ("n_categorical", "int"),
    "data.vocab_size": ("vocab_size", "int"),
    "data.zipf_exponent": ("zipf_exponent", "float"),
    "data.uniform_ids": ("uniform_ids", "bool"),
    "data.click_strength": ("click_strength", "float"),
    "data.top_k": ("top_k", "int"),
    "data.split": ("split", "float"),
    "data.max_rows": ("max_rows", "opt_int"),
    "model.kind": ("model_kind", "str"),
    "model.hidden": ("hidden", "int_tuple"),
    "model.cross_depth": ("cross_depth", "int"),
    "model.embed_dim": ("embed_dim", "int"),
    "model.init_sigma": ("init_sigma", "opt_float"),
    "opt.kind": ("opt_kind", "str"),
    "opt.beta1": ("beta1", "float"),
    "opt.beta2": ("beta2", "float"),
    "opt.eps": ("eps", "float"),
    "opt.lr_dense": ("lr_dense", "float"),
    "opt.lr_embed": ("lr_embed", "float"),
    "opt.l2": ("l2", "float"),
    "opt.warmup_epochs": ("warmup_epochs", "float"),
    "opt.dense_l2": ("dense_l2", "bool"),
    "clip.variant": ("clip_variant", "str"),
    "clip.value": ("clip_value", "float"),
    "clip.r": ("clip_r", "float"),
    "clip.zeta": ("clip_zeta", "float"),
    "scale.rule": ("rule", "str"),
    "scale.base_batch": ("base_batch", "int"),
    "scale.clip_mode": ("clip_mode", "str"),
    "train.batch_size": ("batch_size", "int"),
    "train.epochs": ("epochs", "int"),
    "sweep.batch_sizes": ("sweep_batch_sizes", "int_tuple"),
    "sweep.rules": ("sweep_rules", "str_tuple"),
    "out.dir": ("out_dir", "str"),
}


def _coerce(kind: str, raw: str):
    raw = raw.strip()
    if kind == "str":
        return raw
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "bool":
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"bad boolean {raw!r}")
    if kind == "opt_int":
        return None if raw == "" else int(raw)
    if kind == "opt_float":
        return None if raw == "" else float(raw)
    if kind == "int_tuple":
        return tuple(int(v) for v in raw.split(",") if v.strip())
    if kind == "str_tuple":
        return tuple(v.strip() for v in raw.split(",") if v.strip())
    raise AssertionError(kind)


def parse_config_text(text: str) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        attr, kind = _CONFIG_KEYS[key]
        values[attr] = _coerce(kind, raw)
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text())


# ---------------------------------------------------------------------------
# Run records and reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    test_auc: float
    test_logloss: float
    seconds: float
    steps: int


@dataclass
class RunRecord:
    run_id: str
    model_kind: str
    rule: str
    batch_size: int
    seed: int
    initial_auc: float
    initial_logloss: float
    epochs: list[EpochRecord]
    diverged: bool
    config: dict

    @property
    def final_auc(self) -> float:
        return self.epochs[-1].test_auc if self.epochs else self.initial_auc

    @property
    def final_logloss(self) -> float:
        return self.epochs[-1].test_logloss if self.epochs else self.initial_logloss

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "model_kind": self.model_kind,
            "rule": self.rule,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "initial_auc": self.initial_auc,
            "initial_logloss": self.initial_logloss,
            "epochs": [vars(e) for e in self.epochs],
            "diverged": self.diverged,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(
            run_id=d["run_id"],
            model_kind=d["model_kind"],
            rule=d["rule"],
            batch_size=d["batch_size"],
            seed=d["seed"],
            initial_auc=d["initial_auc"],
            initial_logloss=d["initial_logloss"],
            epochs=[EpochRecord(**e) for e in d["epochs"]],
            diverged=d["diverged"],
            config=d["config"],
        )


def record_fingerprint(record: RunRecord) -> dict:
    """Everything in a record except wall-clock, for determinism comparisons."""
    d = record.to_dict()
    d["epochs"] = [{k: v for k, v in e.items() if k != "seconds"} for e in d["epochs"]]
    return d


# ---------------------------------------------------------------------------
# Dataset and model construction
# ---------------------------------------------------------------------------

def _seed_children(seed: int):
    data_ss, init_ss, batch_ss = np.random.SeedSequence(seed).spawn(3)
    return data_ss, init_ss, batch_ss


def build_dataset(config: ExperimentConfig, seed: int) -> Dataset:
    data_ss, _, _ = _seed_children(seed)
    if config.source == "synthetic":
        spec = SyntheticSpec(
            n_dense=config.n_dense,
            n_categorical=config.n_categorical,
            vocab_sizes=config.vocab_size,
            zipf_exponent=config.zipf_exponent,
            uniform_ids=config.uniform_ids,
        )
        click = np.full(config.n_categorical + config.n_dense, config.click_strength)
        data_seed = int(data_ss.generate_state(1)[0])
        ds = generate_synthetic(spec, config.n_samples, data_seed, click_model=click)
    elif config.source.endswith(".npz"):
        ds, _ = load_dataset(config.source)
    else:
        ds = load_criteo_tsv(config.source, max_rows=config.max_rows)
    if config.top_k >= 1:
        ds = top_k_collapse(ds, config.top_k)
    return ds


def _clip_config(config: ExperimentConfig) -> clip.ClipConfig:
    variant = config.clip_variant
    return clip.ClipConfig(
        variant=variant,
        value=config.clip_value if variant in ("global", "fieldwise", "columnwise") else None,
        r=config.clip_r if variant in ("adaptive_fieldwise", "cowclip") else None,
        zeta=config.clip_zeta if variant in ("adaptive_fieldwise", "cowclip") else None,
        batch_scale_mode=config.clip_mode,
    )


def evaluate_model(
    kind: str,
    params: DenseParams,
    table: EmbeddingTable,
    dataset: Dataset,
    chunk: int = 8192,
) -> metrics.EvalResult:
    probs = np.empty(dataset.n_samples)
    for start in range(0, dataset.n_samples, chunk):
        stop = min(start + chunk, dataset.n_samples)
        idx = np.arange(start, stop)
        batch = _batch_at(dataset, idx)
        probs[start:stop], _ = model_forward(kind, params, table, batch)
    return metrics.evaluate(probs, dataset.labels)


def _batch_at(dataset: Dataset, idx: np.ndarray) -> Batch:
    return Batch(dataset.labels[idx], dataset.dense[idx], dataset.categorical[idx])


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def train(config: ExperimentConfig, seed: int, dataset: Dataset | None = None) -> RunRecord:
    """One full training run; deterministic given (config, seed).

    Per step: batch -> embedding lookup -> forward -> loss/backward -> clip ->
    dense optimizer step (warmup learning rate) -> sparse embedding step.  The
    L2 term is applied inside the embedding optimizer, after clipping, so the
    clip operates on the data gradient alone.
    """
    _, init_ss, batch_ss = _seed_children(seed)
    if dataset is None:
        dataset = build_dataset(config, seed)
    train_ds, test_ds = dataset.split(config.split)
    b = config.batch_size
    if b > train_ds.n_samples:
        raise ValueError("batch_size exceeds the training split")

    s = b / config.base_batch
    base = scaling.BaseHyperparams(
        config.base_batch, config.lr_dense, config.lr_embed, config.l2
    )
    plan = scaling.scale(config.rule, base, s)
    clip_cfg = _clip_config(config)
    adam_cfg = AdamConfig(config.beta1, config.beta2, config.eps)

    table_ss, params_ss = init_ss.spawn(2)
    table_seed = int(table_ss.generate_state(1)[0])
    params_seed = int(params_ss.generate_state(1)[0])
    vocabs = [f.vocab_size for f in train_ds.categorical_fields]
    table = init_table(
        train_ds.categorical_fields, config.embed_dim, config.resolved_init_sigma(), table_seed
    )
    params = init_dense_params(
        config.model_kind,
        vocabs,
        config.embed_dim,
        train_ds.n_dense,
        hidden=config.hidden,
        cross_depth=config.cross_depth,
        seed=params_seed,
    )
    dense = dict(params.named_arrays())
    dense_state = AdamState.init(dense)
    embed_state = EmbedAdamState.init(table)

    steps_per_epoch = train_ds.n_samples // b
    warmup = WarmupSchedule(
        plan.eta_dense, int(round(config.warmup_epochs * steps_per_epoch))
    )

    initial_eval = evaluate_model(config.model_kind, params, table, test_ds)
    head = _batch_at(train_ds, np.arange(min(train_ds.n_samples, 16384)))
    head_probs, _ = model_forward(config.model_kind, params, table, head)
    initial_train_loss = metrics.logloss(head_probs, head.labels)

    run_id = f"{config.model_kind}-{config.rule}-b{b}-seed{seed}"
    record = RunRecord(
        run_id=run_id,
        model_kind=config.model_kind,
        rule=config.rule,
        batch_size=b,
        seed=seed,
        initial_auc=initial_eval.auc,
        initial_logloss=initial_eval.logloss,
        epochs=[],
        diverged=False,
        config=config.to_dict(),
    )

    epoch_seeds = batch_ss.spawn(config.epochs) if config.epochs else []
    global_step = 0
    over_initial = 0
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        losses = []
        for batch in make_batches(train_ds, b, "shuffle_epoch", seed=epoch_seeds[epoch - 1]):
            global_step += 1
            probs, cache = model_forward(config.model_kind, params, table, batch)
            loss, dgrads, sgrad = models.loss_and_backward(
                probs, batch.labels, cache, l2=0.0, l2_scope="none"
            )
            if not math.isfinite(loss):
                record.diverged = True
                break
            losses.append(loss)
            sgrad = clip.apply_clip(clip_cfg, table, sgrad, s=plan.factor)
            lr_d = warmup.lr(global_step)
            if config.opt_kind == "adam":
                dense_state, dense = optim.adam_step(
                    dense_state, dense, dgrads, lr_d, l2=0.0, cfg=adam_cfg
                )
                embed_state, table = optim.adam_sparse_step(
                    embed_state, table, sgrad, plan.eta_embed, l2=plan.l2,
                    dense_l2=config.dense_l2, cfg=adam_cfg,
                )
            elif config.opt_kind == "sgd":
                dense = optim.sgd_step(dense, dgrads, lr_d, l2=0.0)
                table = optim.sgd_sparse_step(
                    table, sgrad, plan.eta_embed, l2=plan.l2, dense_l2=config.dense_l2
                )
            else:
                raise ValueError(f"unknown optimizer kind {config.opt_kind!r}")
            params = params.replace_arrays(dense)
        train_loss = float(np.mean(losses)) if losses else float("nan")
        result = evaluate_model(config.model_kind, params, table, test_ds)
        record.epochs.append(
            EpochRecord(
                epoch=epoch,
                train_loss=train_loss,
                test_auc=result.auc,
                test_logloss=result.logloss,
                seconds=time.perf_counter() - t0,
                steps=steps_per_epoch,
            )
        )
        if record.diverged:
            break
        if math.isfinite(train_loss) and train_loss > 10.0 * initial_train_loss:
            over_initial += 1
            if over_initial >= 3:
                record.diverged = True
                break
        else:
            over_initial = 0
    return record


def sweep(
    config: ExperimentConfig,
    batch_sizes: tuple[int, ...] | None = None,
    rules: tuple[str, ...] | None = None,
    seed: int = 0,
) -> tuple[list[RunRecord], str]:
    """Train every (rule, batch size) pair on one shared dataset."""
    batch_sizes = batch_sizes or config.sweep_batch_sizes or (config.batch_size,)
    rules = rules or config.sweep_rules or (config.rule,)
    dataset = build_dataset(config, seed)
    records = []
    for rule in rules:
        for b in batch_sizes:
            cfg = replace(config, rule=rule, batch_size=b)
            records.append(train(cfg, seed, dataset=dataset))
    return records, comparison_table(records)


def comparison_table(records: list[RunRecord]) -> str:
    """Rules as rows, batch sizes as columns, final test AUC (%) in the cells."""
    rules = list(dict.fromkeys(r.rule for r in records))
    sizes = sorted({r.batch_size for r in records})
    cells = {(r.rule, r.batch_size): r for r in records}
    width = max(10, *(len(rule) for rule in rules)) + 2
    out = ["AUC (%) by scaling rule and batch size"]
    out.append("".join(["rule".ljust(width)] + [str(b).rjust(10) for b in sizes]))
    for rule in rules:
        row = [rule.ljust(width)]
        for b in sizes:
            rec = cells.get((rule, b))
            if rec is None:
                row.append("-".rjust(10))
            elif rec.diverged:
                row.append("diverge".rjust(10))
            else:
                row.append(f"{100 * rec.final_auc:.2f}".rjust(10))
        out.append("".join(row))
    return "\n".join(out)


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

CSV_COLUMNS = (
    "run_id", "model", "rule", "batch_size", "epoch",
    "train_loss", "test_auc", "test_logloss", "seconds",
)


def records_to_csv(records: list[RunRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    for r in records:
        for e in r.epochs:
            writer.writerow(
                [r.run_id, r.model_kind, r.rule, r.batch_size, e.epoch,
                 repr(e.train_loss), repr(e.test_auc), repr(e.test_logloss), repr(e.seconds)]
            )
    return buf.getvalue()


def records_to_json(records: list[RunRecord]) -> str:
    return json.dumps([r.to_dict() for r in records], indent=2)


def records_from_json(text: str) -> list[RunRecord]:
    return [RunRecord.from_dict(d) for d in json.loads(text)]


def emit_report(records: list[RunRecord], fmt: str, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        path = out / "runs.csv"
        path.write_text(records_to_csv(records))
    elif fmt == "json":
        path = out / "runs.json"
        path.write_text(records_to_json(records))
    elif fmt == "text-table":
        path = out / "runs.txt"
        path.write_text(comparison_table(records) + "\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    model_kind: str
    n_trials: int
    max_rel_error: float
    per_tensor: dict[str, float]
    tolerance: float = 1e-5

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def _tiny_setup(kind: str, rng: np.random.Generator):
    n_fields, vocab, dim, n_dense, b = 3, 5, 3, 2, 6
    fields = tuple(FieldSchema(f"c{j}", CATEGORICAL, vocab) for j in range(n_fields))
    table = init_table(fields, dim, init_sigma=0.4, seed=rng.integers(2**32))
    params = init_dense_params(
        kind, [vocab] * n_fields, dim, n_dense,
        hidden=(8, 6), cross_depth=2, seed=rng.integers(2**32),
    )
    # LR weights start at zero; randomize them so their gradients get exercised
    params.lr_weights = [rng.normal(0, 0.3, size=vocab) for _ in range(len(params.lr_weights))]
    if params.lr_bias is not None:
        params.lr_bias = np.asarray(rng.normal(0, 0.3))
    batch = Batch(
        rng.integers(0, 2, size=b).astype(np.uint8),
        rng.normal(size=(b, n_dense)),
        rng.integers(0, vocab, size=(b, n_fields)),
    )
    return table, params, batch


def _total_loss(kind, params, table, batch) -> float:
    probs, _ = model_forward(kind, params, table, batch)
    return metrics.logloss(probs, batch.labels)


def grad_check(model_kind: str, seed: int, n_trials: int = 10) -> GradCheckReport:
    """Central finite differences over every parameter, embeddings included.

    Relative error uses an absolute floor of 1e-3 in the denominator so that
    near-zero entries are compared absolutely.  Two kinds of configuration are
    resampled because they make double-precision central differences
    ill-conditioned: a pre-activation within 1e-6 of a ReLU kink, and a
    saturated output probability (|logit| > 8, where the cancellation inside
    log(1-p) drowns the difference quotient).
    """
    if model_kind not in models.MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}")
    rng = np.random.default_rng(seed)
    per_tensor: dict[str, float] = {}
    done = 0
    while done < n_trials:
        table, params, batch = _tiny_setup(model_kind, rng)
        probs, cache = model_forward(model_kind, params, table, batch)
        kink = min((float(np.abs(z).min()) for z in cache.mlp_cache["zs"]), default=1.0)
        if kink < 1e-6 or float(np.max(np.abs(cache.logit))) > 8.0:
            continue
        done += 1
        _, dense_grads, sparse = models.loss_and_backward(
            probs, batch.labels, cache, l2=0.0, l2_scope="none"
        )
        tensors = dict(params.named_arrays())
        for j, w in enumerate(table.weights):
            tensors[f"embed.{j}"] = w
        analytic = dict(dense_grads)
        for j, w in enumerate(table.weights):
            g = np.zeros_like(w)
            g[sparse.ids[j]] = sparse.grads[j]
            analytic[f"embed.{j}"] = g
        for name, tensor in tensors.items():
            an = analytic[name]
            flat = tensor.reshape(-1)
            an_flat = np.asarray(an).reshape(-1)
            worst = per_tensor.get(name, 0.0)
            for i in range(flat.size):
                h = 1e-6 * max(1.0, abs(flat[i]))
                orig = flat[i]
                flat[i] = orig + h
                up = _total_loss(model_kind, params, table, batch)
                flat[i] = orig - h
                down = _total_loss(model_kind, params, table, batch)
                flat[i] = orig
                fd = (up - down) / (2 * h)
                err = abs(fd - an_flat[i]) / max(abs(fd), abs(an_flat[i]), 1e-3)
                worst = max(worst, err)
            per_tensor[name] = worst
    overall = max(per_tensor.values())
    return GradCheckReport(model_kind, n_trials, overall, per_tensor)


# ---------------------------------------------------------------------------
# Verification suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass
class VerifyReport:
    checks: list[CheckResult]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        return [
            f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}" for c in self.checks
        ]


def _check_adam_equivalence(seed: int) -> CheckResult:
    worst_adam = max(
        optim.verify_adam_scaling_equivalence(c, l2=1e-4, steps=200, seed=seed, eps=1e-12)
        for c in (2.0, 10.0, 100.0)
    )
    worst_sgd = max(
        optim.verify_sgd_scaling_equivalence(c, l2=1e-4, steps=200, seed=seed)
        for c in (2.0, 10.0, 100.0)
    )
    ok = worst_adam < 1e-6 and worst_sgd <= 1e-15
    return CheckResult(
        "adam-equivalence", ok,
        f"adam divergence {worst_adam:.3e} (< 1e-6), sgd {worst_sgd:.3e} (<= 1e-15)",
    )


def _check_presence_prob(seed: int) -> CheckResult:
    from .data import batch_presence_probability

    rng = np.random.default_rng(seed)
    n = 200_000
    worst = 0.0
    ok = True
    for p in (1e-4, 1e-2, 0.5):
        for b in (64, 4096):
            exact = batch_presence_probability(p, b, "exact")
            emp = float(np.mean(rng.binomial(b, p, size=n) > 0))
            se = math.sqrt(max(exact * (1 - exact), 1e-300) / n)
            sigmas = abs(emp - exact) / se if se else (0.0 if emp == exact else math.inf)
            worst = max(worst, sigmas)
            ok = ok and sigmas <= 3.0
            if b * p <= 0.1:
                approx = batch_presence_probability(p, b, "approx")
                rel = abs(approx - exact) / exact
                ok = ok and rel < 0.06
    return CheckResult("presence-prob", ok, f"worst Monte Carlo deviation {worst:.2f} sigma (<= 3)")


def _check_sgd_covariance(seed: int) -> CheckResult:
    problem = scaling.QuadraticProblem(dim=5, n_data=512, seed=seed)
    cov_a = scaling.estimate_update_covariance(problem, b=8, eta=1e-2, n_trials=10_000, seed=seed + 1)
    cov_b = scaling.estimate_update_covariance(problem, b=32, eta=2e-2, n_trials=10_000, seed=seed + 2)
    ratio = float(np.trace(cov_b) / np.trace(cov_a))
    ok = 0.9 <= ratio <= 1.1
    return CheckResult("sgd-covariance", ok, f"(4b, 2eta) / (b, eta) trace ratio {ratio:.4f} in [0.9, 1.1]")


def _check_update_frequency(seed: int) -> CheckResult:
    p, b, s, eta = 1e-4, 64, 16, 1e-3
    fixed = scaling.expected_update_frequency_check(p, b, s, eta, n_trials=200_000, seed=seed)
    naive = scaling.expected_update_frequency_check(
        p, b, s, eta, n_trials=200_000, seed=seed + 1, eta_big=s * eta
    )
    ok = 0.9 <= fixed.ratio <= 1.1 and 0.85 * s <= naive.ratio <= 1.15 * s
    return CheckResult(
        "update-frequency", ok,
        f"fixed-lr ratio {fixed.ratio:.4f} in [0.9, 1.1]; naive-linear {naive.ratio:.2f} in [{0.85*s:.1f}, {1.15*s:.1f}]",
    )


_VERIFY_SUITES = {
    "adam-equivalence": _check_adam_equivalence,
    "presence-prob": _check_presence_prob,
    "sgd-covariance": _check_sgd_covariance,
    "update-frequency": _check_update_frequency,
}


def verify(suites: tuple[str, ...] = (), seed: int = 0) -> VerifyReport:
    """Run the named verification suites (all of them when empty)."""
    names = suites or tuple(_VERIFY_SUITES)
    unknown = [n for n in names if n not in _VERIFY_SUITES]
    if unknown:
        raise ValueError(f"unknown verification suite(s): {', '.join(unknown)}")
    return VerifyReport([_VERIFY_SUITES[n](seed) for n in names])
