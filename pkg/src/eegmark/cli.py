"""Command-line interface.

Every command takes ``--seed``, ``--out-dir``, ``--force`` and ``--quiet``.
Artifacts go to ``--out-dir``; log lines (the only output carrying wall-clock
information) go to stderr.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import logging
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from . import attacks as atk
from .data import (
    EEGDataset,
    SyntheticSpec,
    carve,
    dumps_trials,
    generate_synthetic,
    load_dataset,
    read_trials_csv,
    save_dataset,
    split,
    window_trials,
)
from .errors import (
    CheckpointError,
    ConfigError,
    DivergenceError,
    EEGMarkError,
    FormatError,
    MetadataError,
    RecordIntegrityError,
    RefusedOverwrite,
    SigningFailure,
)
from .filtergen import DEFAULT_OOB, serialize_filter, transform
from .identity import (
    build_verifier_string,
    generate_keypair,
    read_private_key,
    read_public_key,
    read_signature,
    sign_verifier,
    write_keypair,
    write_signature,
)
from .nn import EpochLog, Network, TrainConfig, evaluate, load_checkpoint, load_config, save_checkpoint
from .pipeline import (
    DEFAULT_MARGIN,
    Strategy,
    Splits,
    baseline_train,
    embed_from_scratch,
    embed_pretrain,
    make_records,
    verify_record,
    verify_watermark,
)

log = logging.getLogger("eegmark")

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_FORMAT = 4
EXIT_INTEGRITY = 5
EXIT_EXISTS = 6
EXIT_STAGE = 7

EXIT_CODES_HELP = """exit codes:
  0  success (verify: ownership confirmed; run: every gate passed)
  1  verification rejected or an acceptance gate failed
  2  usage error
  3  unreadable or unwritable file
  4  malformed data, config or manifest
  5  integrity failure (bad key, signature, checkpoint or record)
  6  refusing to overwrite an existing file (pass --force)
  7  a training or attack stage failed
"""

SPLIT_FRACTIONS = (0.7, 0.15, 0.15)


class StageFailure(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


def sub_seed(seed: int, name: str) -> int:
    """Independent 32-bit seed for one named component."""
    return int.from_bytes(hashlib.sha256(f"{seed}:{name}".encode()).digest()[:4], "big")


def _shape(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.lower().replace("×", "x").split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a shape like 4x32, got {text!r}") from None


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(",") if p.strip())


def _names(text: str) -> tuple[str, ...]:
    return tuple(p.strip().upper() for p in text.split(",") if p.strip())


class Workspace:
    def __init__(self, out_dir, force: bool):
        self.root = Path(out_dir)
        self.force = force

    def path(self, name: str) -> Path:
        return self.root / name

    def claim(self, *names: str) -> list[Path]:
        """Paths for new files; refuses to clobber existing ones unless forced."""
        paths = [self.path(n) for n in names]
        if not self.force:
            taken = [str(p) for p in paths if p.exists()]
            if taken:
                raise RefusedOverwrite(f"refusing to overwrite {', '.join(taken)}; pass --force")
        for p in paths:
            p.parent.mkdir(parents=True, exist_ok=True)
        return paths

    def write_text(self, name: str, text: str) -> Path:
        (p,) = self.claim(name)
        p.write_text(text, encoding="utf-8", newline="\n")
        return p


def metrics_csv(logs: Sequence[EpochLog]) -> str:
    lines = ["epoch,train_loss,train_acc,val_loss,val_acc"]
    for lg in logs:
        v = lg.val
        val = f"{v.mean_loss:.6f},{v.accuracy:.6f}" if v is not None else ","
        lines.append(f"{lg.epoch},{lg.train.mean_loss:.6f},{lg.train.accuracy:.6f},{val}")
    return "\n".join(lines) + "\n"


def experiment_splits(ds: EEGDataset, seed: int, attacker_fraction: float = 0.2,
                      fractions: Sequence[float] = SPLIT_FRACTIONS):
    """(train, val, test, attacker): the attacker share is carved off the training split."""
    train_set, val_set, test_set = split(ds, fractions, sub_seed(seed, "split"))
    train_set, attacker = carve(train_set, attacker_fraction, sub_seed(seed, "carve"))
    return train_set, val_set, test_set, attacker


def _key_seed(seed: int) -> bytes:
    return hashlib.sha256(b"eegmark.keygen" + int(seed).to_bytes(8, "big", signed=True)).digest()


# -- manifest ---------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentManifest:
    seed: int
    out_dir: Path
    data_source: str
    synthetic: SyntheticSpec
    split_fractions: tuple[float, ...]
    attacker_fraction: float
    model: str
    train: TrainConfig
    baseline_epochs: int
    embed_epochs: int
    pretrain_embed_epochs: int
    owner_id: str
    timestamp: int
    key_seed: bytes
    block: tuple[int, int]
    oob_magnitude: float
    k: int
    strategies: tuple[Strategy, ...]
    trigger_fraction: float
    threshold_margin: float
    fine_tune: tuple[str, ...]
    fine_tune_epochs: int
    transfer: tuple[str, ...]
    transfer_epochs: int
    prune: tuple[str, ...]
    prune_ratios: tuple[float, ...]
    piracy_epochs: int
    probes: int
    gates: dict

    def network_config(self):
        return load_config(self.model)


DEFAULT_MANIFEST = "default_manifest.ini"


def read_manifest_text(path=None) -> tuple[str, Path]:
    if path is None:
        return resources.files("eegmark.resources").joinpath(DEFAULT_MANIFEST).read_text(), Path.cwd()
    p = Path(path)
    return p.read_text(encoding="utf-8"), p.resolve().parent


def parse_manifest(text: str, base_dir: Path = Path("."), seed: int | None = None,
                   out_dir=None) -> ExperimentManifest:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed manifest: {exc}") from exc

    def get(section, key, default=None, conv=str):
        if not cp.has_option(section, key):
            if default is None:
                raise ConfigError(f"manifest is missing [{section}] {key}")
            return default
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc

    def boolean(raw):
        return raw.strip().lower() in ("1", "true", "yes", "on")

    seed = get("experiment", "seed", 0, int) if seed is None else seed
    out = Path(out_dir) if out_dir is not None else base_dir / get("experiment", "out_dir", "run")
    source = get("data", "source", "synthetic")
    if source != "synthetic":
        src_path = (base_dir / source)
        if not src_path.exists():
            raise ConfigError(f"dataset {src_path} does not exist")
        source = str(src_path)
    bands = get("data", "class_bands", "6;11")
    synthetic = SyntheticSpec(
        n_samples=get("data", "n_samples", 2000, int),
        channels=get("data", "channels", 8, int),
        timepoints=get("data", "timepoints", 64, int),
        sample_rate=get("data", "sample_rate", 64, int),
        class_bands=tuple(_floats(b.replace(" ", ",")) for b in bands.split(";")),
        noise_std=get("data", "noise_std", 0.5, float),
        seed=sub_seed(seed, "data"),
    )
    key_hex = get("watermark", "key_seed", "")
    key_seed = bytes.fromhex(key_hex) if key_hex else _key_seed(seed)
    gate_items = dict(cp.items("gates")) if cp.has_section("gates") else {}
    gates = {
        "baseline_min_accuracy": float(gate_items.get("baseline_min_accuracy", 0.9)),
        "require_confirmed": boolean(gate_items.get("require_confirmed", "true")),
        "max_false_confirmations": int(gate_items.get("max_false_confirmations", 0)),
        "require_piracy_resistance": boolean(gate_items.get("require_piracy_resistance", "true")),
    }
    model = get("model", "config", "mini_eeg")
    if model.endswith(".json"):
        model = str(base_dir / model)
    m = ExperimentManifest(
        seed=seed,
        out_dir=out,
        data_source=source,
        synthetic=synthetic,
        split_fractions=get("data", "split", SPLIT_FRACTIONS, _floats),
        attacker_fraction=get("data", "attacker_fraction", 0.2, float),
        model=model,
        train=TrainConfig(
            learning_rate=get("train", "learning_rate", 1e-3, float),
            batch_size=get("train", "batch_size", 64, int),
            early_stop_patience=get("train", "early_stop_patience", 5, int) or None,
            min_epochs=get("train", "min_epochs", 20, int),
            clip_norm=get("train", "clip_norm", 1.0, float) or None,
            shuffle_seed=sub_seed(seed, "shuffle"),
        ),
        baseline_epochs=get("train", "baseline_epochs", 60, int),
        embed_epochs=get("train", "embed_epochs", 100, int),
        pretrain_embed_epochs=get("train", "pretrain_embed_epochs", 20, int),
        owner_id=get("watermark", "owner_id", "owner"),
        timestamp=get("watermark", "timestamp", 1735689600, int),
        key_seed=key_seed,
        block=get("watermark", "block", (4, 32), _shape),
        oob_magnitude=get("watermark", "oob_magnitude", DEFAULT_OOB, float),
        k=get("watermark", "k", 1, int),
        strategies=tuple(Strategy(s) for s in get("watermark", "strategies", ("FROM_SCRATCH",), _names)),
        trigger_fraction=get("watermark", "trigger_fraction", 0.05, float),
        threshold_margin=get("watermark", "threshold_margin", DEFAULT_MARGIN, float),
        fine_tune=get("attacks", "fine_tune", (), _names),
        fine_tune_epochs=get("attacks", "fine_tune_epochs", 30, int),
        transfer=get("attacks", "transfer", (), _names),
        transfer_epochs=get("attacks", "transfer_epochs", 30, int),
        prune=get("attacks", "prune", (), _names),
        prune_ratios=get("attacks", "prune_ratios", tuple(i / 10 for i in range(10)), _floats),
        piracy_epochs=get("attacks", "piracy_epochs", 0, int),
        probes=get("attacks", "probes", 0, int),
        gates=gates,
    )
    if len(m.key_seed) != 32:
        raise ConfigError("[watermark] key_seed must be 32 bytes of hex")
    return m


# -- run ----------------------------------------------------------------------

def _stage(name):
    def wrap(fn):
        def inner(*args, **kwargs):
            log.info("stage %s", name)
            try:
                return fn(*args, **kwargs)
            except (EEGMarkError, ArithmeticError, ValueError) as exc:
                raise StageFailure(name, exc) from exc
        return inner
    return wrap


def run_experiment(m: ExperimentManifest, ws: Workspace) -> tuple[bool, dict]:
    """Baseline, embedding, verification and attacks as configured; returns (gates passed, summary)."""
    summary: dict = {"seed": m.seed}
    gate_results: dict[str, bool] = {}
    config = m.network_config()

    ds = _stage("data")(lambda: load_dataset(m.data_source) if m.data_source != "synthetic"
                        else generate_synthetic(m.synthetic))()
    train_set, val_set, test_set, attacker = _stage("split")(experiment_splits)(
        ds, m.seed, m.attacker_fraction, m.split_fractions)
    splits = Splits(train_set, val_set, test_set)
    summary.update(train_samples=len(train_set), val_samples=len(val_set), test_samples=len(test_set),
                   attacker_samples=len(attacker))

    cfg = m.train
    base_cfg = TrainConfig(**{**cfg.__dict__, "epochs": m.baseline_epochs})
    base, logs = _stage("baseline")(baseline_train)(config, splits, base_cfg, sub_seed(m.seed, "init"))
    save_checkpoint(base, ws.claim("baseline.ckpt")[0])
    ws.write_text("baseline.metrics.csv", metrics_csv(logs))
    base_acc = evaluate(base, test_set).accuracy
    summary["baseline_accuracy"] = base_acc
    gate_results["baseline_accuracy"] = base_acc >= m.gates["baseline_min_accuracy"]

    keypair = generate_keypair(m.key_seed)
    write_keypair(keypair, *ws.claim("owner.key", "owner.pub"))
    records = make_records(keypair, m.owner_id, m.timestamp, m.k, config.input_shape, config.num_labels,
                           block_shape=m.block, oob_magnitude=m.oob_magnitude,
                           trigger_fraction=m.trigger_fraction)
    for j, r in enumerate(records):
        write_signature(r.signature, ws.claim(f"owner_{j}.sig")[0])
        ws.write_text(f"filter_{j}.txt", serialize_filter(r.filter))

    if m.probes:
        t_base = base_acc - m.threshold_margin
        fp = _stage("false_positive_probe")(atk.false_positive_probe)(
            base, m.probes, test_set, t_base, sub_seed(m.seed, "probes"), m.block)
        ws.write_text("probes_baseline.txt", fp.to_text())
        summary["baseline_probe_confirmations"] = fp.confirmations
        gate_results["no_false_positives"] = fp.confirmations <= m.gates["max_false_confirmations"]

    new_task = None
    if m.transfer:
        spec = SyntheticSpec(n_samples=max(200, 2 * len(attacker)), channels=m.synthetic.channels,
                             timepoints=m.synthetic.timepoints, sample_rate=m.synthetic.sample_rate,
                             class_bands=((4.0,), (15.0,)), noise_std=m.synthetic.noise_std,
                             seed=sub_seed(m.seed, "new_task"))
        new_task = split(generate_synthetic(spec), (0.8, 0.2), sub_seed(m.seed, "new_task_split"))

    for strategy in m.strategies:
        tag = strategy.value.lower()
        if strategy is Strategy.FROM_SCRATCH:
            emb_cfg = TrainConfig(**{**cfg.__dict__, "epochs": m.embed_epochs})
            wm, logs = _stage(f"embed_{tag}")(embed_from_scratch)(config, splits, records, emb_cfg,
                                                                 sub_seed(m.seed, "init"))
        else:
            emb_cfg = TrainConfig(**{**cfg.__dict__, "epochs": m.pretrain_embed_epochs})
            wm, logs = _stage(f"embed_{tag}")(embed_pretrain)(base, splits, records, emb_cfg,
                                                             sub_seed(m.seed, "triggers"))
        save_checkpoint(wm, ws.claim(f"{tag}.ckpt")[0])
        ws.write_text(f"{tag}.metrics.csv", metrics_csv(logs))
        wm_acc = evaluate(wm, test_set).accuracy
        t_acc = wm_acc - m.threshold_margin
        summary[f"{tag}_accuracy"] = wm_acc
        gate_results[f"{tag}_functionality"] = wm_acc >= base_acc - m.threshold_margin
        note = f"T_acc = clean test accuracy {wm_acc:.6f} minus margin {m.threshold_margin:g}"
        for j, r in enumerate(records):
            rep = _stage(f"verify_{tag}")(verify_record)(wm, keypair.public_key, r, test_set, t_acc, (note,))
            ws.write_text(f"{tag}.verify_{j}.txt", rep.to_text())
            summary[f"{tag}_verify_{j}_acc"] = rep.acc
            summary[f"{tag}_verify_{j}_true_embed"] = rep.true_embed_accuracy
            summary[f"{tag}_verify_{j}_confirmed"] = rep.confirmed
            if m.gates["require_confirmed"]:
                gate_results[f"{tag}_confirmed_{j}"] = rep.confirmed

        probe = atk.WatermarkProbe(records[0].filter, test_set)
        adir = f"attacks_{tag}"
        for mode in m.fine_tune:
            acfg = atk.AttackConfig(atk.AttackKind.FINE_TUNE, mode, epochs=m.fine_tune_epochs,
                                    learning_rate=cfg.learning_rate, batch_size=cfg.batch_size,
                                    seed=sub_seed(m.seed, f"ft_{mode}") % 10_000)
            rep = _stage(f"fine_tune_{mode}")(atk.fine_tune_attack)(wm, attacker, mode, probe, acfg, t_acc, wm_acc)
            _write_attack(ws, adir, rep)
            summary[f"{tag}_{mode.lower()}_final_true"] = rep.final.true_acc
        for mode in m.transfer:
            acfg = atk.AttackConfig(atk.AttackKind.TRANSFER, mode, epochs=m.transfer_epochs,
                                    learning_rate=cfg.learning_rate, batch_size=cfg.batch_size,
                                    seed=sub_seed(m.seed, f"tr_{mode}") % 10_000)
            rep = _stage(f"transfer_{mode}")(atk.transfer_attack)(wm, new_task[0], mode, probe, acfg,
                                                                  new_task[1], t_acc, wm_acc)
            _write_attack(ws, adir, rep)
            summary[f"{tag}_{mode.lower()}_final_true"] = rep.final.true_acc
        for strat in m.prune:
            acfg = atk.AttackConfig(atk.AttackKind.PRUNE, strat, ratios=m.prune_ratios,
                                    seed=sub_seed(m.seed, f"prune_{strat}") % 10_000)
            rep = _stage(f"prune_{strat}")(atk.prune_attack)(wm, strat, m.prune_ratios, probe, acfg, t_acc, wm_acc)
            _write_attack(ws, adir, rep)
            asym = all(not (s.eeg_acc >= 0.8 and s.true_acc < 0.8) for s in rep.steps)
            summary[f"{tag}_{strat.lower()}_asymmetry"] = asym
        if m.piracy_epochs:
            acfg = atk.AttackConfig(atk.AttackKind.PIRACY, "SECOND_WATERMARK", epochs=m.piracy_epochs,
                                    learning_rate=cfg.learning_rate, batch_size=cfg.batch_size,
                                    seed=sub_seed(m.seed, "piracy") % 10_000)
            pirate = generate_keypair(hashlib.sha256(m.key_seed + b"pirate").digest())
            pv = build_verifier_string("pirate", m.timestamp + 1000)
            r0 = records[0]
            out = _stage("piracy")(atk.piracy_attack)(
                wm, pirate, pv, attacker, probe, keypair.public_key, r0.signature, r0.verifier, acfg, t_acc,
                m.block, baseline_acc=wm_acc)
            _write_attack(ws, adir, out.report)
            ws.write_text(f"{adir}/piracy.owner_verify.txt", out.owner.to_text())
            ws.write_text(f"{adir}/piracy.attacker_verify.txt", out.attacker.to_text())
            resisted = out.owner.confirmed and (not out.attacker.confirmed or
                                                 out.report.metadata["eeg_drop"] >= 0.10)
            summary[f"{tag}_piracy_owner_confirmed"] = out.owner.confirmed
            summary[f"{tag}_piracy_attacker_confirmed"] = out.attacker.confirmed
            if m.gates["require_piracy_resistance"]:
                gate_results[f"{tag}_piracy_resistance"] = resisted
        if m.probes:
            fp = _stage(f"probe_{tag}")(atk.false_positive_probe)(
                wm, m.probes, test_set, t_acc, sub_seed(m.seed, "probes"), m.block)
            ws.write_text(f"probes_{tag}.txt", fp.to_text())
            summary[f"{tag}_probe_confirmations"] = fp.confirmations
            gate_results[f"{tag}_no_false_positives"] = fp.confirmations <= m.gates["max_false_confirmations"]

    passed = all(gate_results.values())
    summary.update({f"gate_{k}": v for k, v in gate_results.items()})
    summary["all_gates_passed"] = passed
    ws.write_text("summary.txt", "".join(f"{k}: {atk._fmt(v)}\n" for k, v in summary.items()))
    return passed, summary


def _write_attack(ws: Workspace, subdir: str, rep: atk.AttackReport) -> None:
    ws.write_text(f"{subdir}/{rep.stem}.csv", rep.to_csv())
    ws.write_text(f"{subdir}/{rep.stem}.summary.txt", rep.summary_text())


# -- commands -----------------------------------------------------------------

def cmd_keygen(args, ws: Workspace) -> int:
    if args.seed_file:
        seed_bytes = Path(args.seed_file).read_bytes()
        if len(seed_bytes) == 64 or len(seed_bytes.strip()) == 64:
            seed_bytes = bytes.fromhex(seed_bytes.decode("ascii").strip())
    elif args.entropy:
        seed_bytes = os.urandom(32)
    else:
        seed_bytes = _key_seed(args.seed)
    kp = generate_keypair(seed_bytes)
    priv, pub = ws.claim(f"{args.name}.key", f"{args.name}.pub")
    write_keypair(kp, priv, pub)
    _say(args, f"wrote {priv} and {pub}")
    return EXIT_OK


def cmd_sign(args, ws: Workspace) -> int:
    kp = read_private_key(args.key)
    sig = sign_verifier(kp, build_verifier_string(args.owner_id, args.timestamp))
    (path,) = ws.claim(f"{args.name}.sig")
    write_signature(sig, path)
    _say(args, sig.hex())
    return EXIT_OK


def cmd_transform(args, ws: Workspace) -> int:
    filt = transform(read_signature(args.sig), args.shape, args.labels, args.block, oob_magnitude=args.oob)
    text = serialize_filter(filt)
    ws.write_text(f"{args.name}.txt", text)
    _say(args, text.rstrip("\n"))
    return EXIT_OK


def cmd_gen_data(args, ws: Workspace) -> int:
    spec = SyntheticSpec(n_samples=args.n_samples, channels=args.channels, timepoints=args.timepoints,
                         sample_rate=args.sample_rate, noise_std=args.noise, seed=sub_seed(args.seed, "data"))
    ds = generate_synthetic(spec)
    (path,) = ws.claim(f"{args.name}.eegw")
    save_dataset(ds, path)
    _say(args, f"wrote {len(ds)} samples to {path}")
    return EXIT_OK


def cmd_convert(args, ws: Workspace) -> int:
    rec = read_trials_csv(args.csv, args.sample_rate)
    if args.trials:
        (path,) = ws.claim(f"{args.name}.eegt")
        path.write_bytes(dumps_trials(rec))
        _say(args, f"wrote {len(rec.signals)} trials to {path}")
    else:
        ds = window_trials(rec, args.valence_threshold, args.window_seconds)
        (path,) = ws.claim(f"{args.name}.eegw")
        save_dataset(ds, path)
        _say(args, f"wrote {len(ds)} windows to {path}")
    return EXIT_OK


def _train_cfg(args, epochs, seed_name) -> TrainConfig:
    return TrainConfig(learning_rate=args.lr, batch_size=args.batch_size, epochs=epochs,
                       early_stop_patience=args.patience or None, min_epochs=args.min_epochs,
                       clip_norm=args.clip_norm or None, shuffle_seed=sub_seed(args.seed, seed_name))


def cmd_train(args, ws: Workspace) -> int:
    train_set, val_set, test_set, _ = experiment_splits(load_dataset(args.data), args.seed)
    config = load_config(args.config)
    net, logs = _stage("train")(baseline_train)(config, (train_set, val_set, test_set),
                                                _train_cfg(args, args.epochs, "shuffle"), sub_seed(args.seed, "init"))
    (ck,) = ws.claim(f"{args.name}.ckpt")
    save_checkpoint(net, ck)
    ws.write_text(f"{args.name}.metrics.csv", metrics_csv(logs))
    _say(args, f"test accuracy {evaluate(net, test_set).accuracy:.6f}; wrote {ck}")
    return EXIT_OK


def cmd_embed(args, ws: Workspace) -> int:
    train_set, val_set, test_set, _ = experiment_splits(load_dataset(args.data), args.seed)
    kp = read_private_key(args.key)
    strategy = Strategy(args.strategy.upper())
    if strategy is Strategy.PRETRAIN:
        if not args.pretrained:
            raise ConfigError("the PRETRAIN strategy needs --pretrained")
        base = load_checkpoint(args.pretrained)
        config = base.config
    else:
        config = load_config(args.config)
    records = make_records(kp, args.owner_id, args.timestamp, args.k, config.input_shape, config.num_labels,
                           block_shape=args.block, oob_magnitude=args.oob, strategy=strategy,
                           trigger_fraction=args.trigger_fraction)
    splits = (train_set, val_set, test_set)
    cfg = _train_cfg(args, args.epochs, "shuffle")
    if strategy is Strategy.PRETRAIN:
        net, logs = _stage("embed")(embed_pretrain)(base, splits, records, cfg, sub_seed(args.seed, "triggers"))
    else:
        net, logs = _stage("embed")(embed_from_scratch)(config, splits, records, cfg, sub_seed(args.seed, "init"))
    (ck,) = ws.claim(f"{args.name}.ckpt")
    save_checkpoint(net, ck)
    ws.write_text(f"{args.name}.metrics.csv", metrics_csv(logs))
    for j, r in enumerate(records):
        write_signature(r.signature, ws.claim(f"{args.name}_{j}.sig")[0])
        ws.write_text(f"{args.name}_{j}.filter.txt", serialize_filter(r.filter))
        ws.write_text(f"{args.name}_{j}.verifier.txt", f"owner_id: {r.verifier.owner_id}\ntimestamp: {r.verifier.timestamp}\n")
    _say(args, f"test accuracy {evaluate(net, test_set).accuracy:.6f}; wrote {ck}")
    return EXIT_OK


def _eval_set(args) -> EEGDataset:
    ds = load_dataset(args.data)
    if args.split == "all":
        return ds
    return experiment_splits(ds, args.seed)[2]


def cmd_verify(args, ws: Workspace) -> int:
    model = load_checkpoint(args.model)
    test_set = _eval_set(args)
    pk = read_public_key(args.pub)
    sig = read_signature(args.sig)
    v = build_verifier_string(args.owner_id, args.timestamp)
    t_acc = args.threshold if args.threshold is not None else evaluate(model, test_set).accuracy - DEFAULT_MARGIN
    rep = verify_watermark(model, pk, sig, v, test_set, t_acc, block_shape=args.block, oob_magnitude=args.oob)
    text = rep.to_text()
    if args.report:
        ws.write_text(args.report, text)
    if not args.quiet:
        sys.stdout.write(text)
    return EXIT_OK if rep.confirmed else EXIT_REJECTED


def cmd_attack(args, ws: Workspace) -> int:
    model = load_checkpoint(args.model)
    train_set, _, test_set, attacker = experiment_splits(load_dataset(args.data), args.seed, args.attacker_fraction)
    sig = read_signature(args.sig)
    filt = transform(sig, model.config.input_shape, model.config.num_labels, args.block, oob_magnitude=args.oob)
    probe = atk.WatermarkProbe(filt, test_set)
    wm_acc = evaluate(model, test_set).accuracy
    t_acc = wm_acc - DEFAULT_MARGIN
    kind = atk.AttackKind(args.kind.upper().replace("-", "_"))
    acfg = atk.AttackConfig(kind, args.mode.upper(), epochs=args.epochs, ratios=args.ratios,
                            attacker_fraction=args.attacker_fraction, learning_rate=args.lr,
                            batch_size=args.batch_size, seed=args.seed)
    if kind is atk.AttackKind.FINE_TUNE:
        rep = _stage("attack")(atk.fine_tune_attack)(model, attacker, args.mode, probe, acfg, t_acc, wm_acc)
    elif kind is atk.AttackKind.TRANSFER:
        spec = SyntheticSpec(n_samples=max(200, 2 * len(attacker)), channels=model.config.input_shape[0],
                             timepoints=model.config.input_shape[-1], class_bands=((4.0,), (15.0,)),
                             seed=sub_seed(args.seed, "new_task"))
        nt_train, nt_test = split(generate_synthetic(spec), (0.8, 0.2), sub_seed(args.seed, "new_task_split"))
        rep = _stage("attack")(atk.transfer_attack)(model, nt_train, args.mode, probe, acfg, nt_test, t_acc, wm_acc)
    elif kind is atk.AttackKind.PRUNE:
        rep = _stage("attack")(atk.prune_attack)(model, args.mode, args.ratios, probe, acfg, t_acc, wm_acc)
    else:
        if not (args.pub and args.owner_id is not None and args.timestamp is not None):
            raise ConfigError("a piracy attack needs --pub, --owner-id and --timestamp of the owner")
        pirate = generate_keypair(hashlib.sha256(_key_seed(args.seed) + b"pirate").digest())
        pv = build_verifier_string("pirate", args.timestamp + 1000)
        out = _stage("attack")(atk.piracy_attack)(
            model, pirate, pv, attacker, probe, read_public_key(args.pub), sig,
            build_verifier_string(args.owner_id, args.timestamp), acfg, t_acc, args.block, baseline_acc=wm_acc)
        rep = out.report
        ws.write_text(f"{rep.stem}.owner_verify.txt", out.owner.to_text())
        ws.write_text(f"{rep.stem}.attacker_verify.txt", out.attacker.to_text())
    _write_attack(ws, ".", rep)
    if not args.quiet:
        sys.stdout.write(rep.summary_text())
    return EXIT_OK


def cmd_run(args, ws: Workspace) -> int:
    text, base_dir = read_manifest_text(args.manifest)
    m = parse_manifest(text, base_dir, seed=args.seed_given, out_dir=args.out_dir_given)
    ws = Workspace(m.out_dir, args.force)
    passed, summary = run_experiment(m, ws)
    if not args.quiet:
        sys.stdout.write("".join(f"{k}: {atk._fmt(v)}\n" for k, v in summary.items()))
    return EXIT_OK if passed else EXIT_REJECTED


def cmd_report(args, ws: Workspace) -> int:
    """Collect every report under a run directory into one markdown document."""
    root = Path(args.run_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"no run directory at {root}")
    parts = ["# Experiment report\n"]
    for path in sorted(p for p in root.rglob("*") if p.suffix in (".txt", ".csv") and p.is_file()):
        rel = path.relative_to(root).as_posix()
        if rel == args.output:
            continue
        parts.append(f"\n## {rel}\n\n```\n{path.read_text(encoding='utf-8').rstrip()}\n```\n")
    doc = "".join(parts)
    out = Workspace(root, args.force).write_text(args.output, doc)
    _say(args, f"wrote {out}")
    return EXIT_OK


def _say(args, text: str) -> None:
    if not args.quiet:
        print(text)


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="global seed (default 0)")
    common.add_argument("--out-dir", default=None, help="directory for artifacts (default: current)")
    common.add_argument("--force", action="store_true", help="overwrite existing files")
    common.add_argument("--quiet", action="store_true", help="only print errors")

    p = argparse.ArgumentParser(prog="eegmark", description="Wonder-filter watermarking for EEG classifiers.",
                                epilog=EXIT_CODES_HELP, formatter_class=argparse.RawDescriptionHelpFormatter,
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, fn, help_text, epilog=None):
        sp = sub.add_parser(name, parents=[common], help=help_text, description=help_text,
                            epilog=(epilog or "") + "\n" + EXIT_CODES_HELP,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.set_defaults(func=fn)
        return sp

    def training_flags(sp, epochs):
        sp.add_argument("--config", default="mini_eeg", help="built-in config name or JSON file")
        sp.add_argument("--epochs", type=int, default=epochs)
        sp.add_argument("--lr", type=float, default=1e-3)
        sp.add_argument("--batch-size", type=int, default=64)
        sp.add_argument("--patience", type=int, default=5, help="early-stopping patience, 0 disables")
        sp.add_argument("--min-epochs", type=int, default=20, help="epochs before early stopping may trigger")
        sp.add_argument("--clip-norm", type=float, default=1.0, help="global gradient-norm clip, 0 disables")

    sp = add("keygen", cmd_keygen, "Create an Ed25519 owner keypair.")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--seed-file", help="file with 32 raw bytes (or 64 hex characters) of key seed")
    g.add_argument("--entropy", action="store_true", help="draw the key seed from the OS")
    sp.add_argument("--name", default="owner")

    sp = add("sign", cmd_sign, "Sign a verifier string (owner id + timestamp).")
    sp.add_argument("--key", required=True)
    sp.add_argument("--owner-id", required=True)
    sp.add_argument("--timestamp", type=int, required=True)
    sp.add_argument("--name", default="owner")

    sp = add("transform", cmd_transform, "Derive the wonder filter from a signature.")
    sp.add_argument("--sig", required=True)
    sp.add_argument("--shape", type=_shape, default=(8, 64))
    sp.add_argument("--labels", type=int, default=2)
    sp.add_argument("--block", type=_shape, default=(4, 32))
    sp.add_argument("--oob", type=float, default=DEFAULT_OOB)
    sp.add_argument("--name", default="filter")

    sp = add("gen-data", cmd_gen_data, "Generate a synthetic EEG-like dataset container.")
    sp.add_argument("--n-samples", type=int, default=2000)
    sp.add_argument("--channels", type=int, default=8)
    sp.add_argument("--timepoints", type=int, default=64)
    sp.add_argument("--sample-rate", type=int, default=64)
    sp.add_argument("--noise", type=float, default=0.5)
    sp.add_argument("--name", default="data")

    convert_help = """CSV layout: a header row 'trial,channel,valence[,arousal,...],t0,t1,...'
followed by one row per (trial, channel).  Rating columns sit between
'channel' and the first sample column; only valence is used for labels."""
    sp = add("convert", cmd_convert, "Convert a trial CSV into a dataset container.", convert_help)
    sp.add_argument("csv")
    sp.add_argument("--sample-rate", type=float, required=True)
    sp.add_argument("--valence-threshold", type=float, default=5.0)
    sp.add_argument("--window-seconds", type=float, default=1.0)
    sp.add_argument("--trials", action="store_true", help="write the trial container instead of windows")
    sp.add_argument("--name", default="data")

    sp = add("train", cmd_train, "Train a model on clean data (no watermark).")
    sp.add_argument("--data", required=True)
    training_flags(sp, 60)
    sp.add_argument("--name", default="baseline")

    sp = add("embed", cmd_embed, "Train a watermarked model.")
    sp.add_argument("--data", required=True)
    sp.add_argument("--key", required=True)
    sp.add_argument("--owner-id", required=True)
    sp.add_argument("--timestamp", type=int, required=True)
    sp.add_argument("--block", type=_shape, default=(4, 32))
    sp.add_argument("--oob", type=float, default=DEFAULT_OOB)
    sp.add_argument("--k", type=int, default=1, help="number of independent watermarks")
    sp.add_argument("--strategy", default="from_scratch", choices=["from_scratch", "pretrain"])
    sp.add_argument("--pretrained", help="checkpoint to continue from (pretrain strategy)")
    sp.add_argument("--trigger-fraction", type=float, default=0.05)
    training_flags(sp, 100)
    sp.add_argument("--name", default="watermarked")

    sp = add("verify", cmd_verify, "Verify ownership of a model.")
    sp.add_argument("--model", required=True)
    sp.add_argument("--pub", required=True)
    sp.add_argument("--sig", required=True)
    sp.add_argument("--owner-id", required=True)
    sp.add_argument("--timestamp", type=int, required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--split", choices=["test", "all"], default="test",
                    help="'test' re-derives the held-out split from --seed")
    sp.add_argument("--block", type=_shape, default=(4, 32))
    sp.add_argument("--oob", type=float, default=DEFAULT_OOB)
    sp.add_argument("--threshold", type=float, help="T_acc (default: clean accuracy - 0.05)")
    sp.add_argument("--report", help="also write the report to this file under --out-dir")

    sp = add("attack", cmd_attack, "Run one attack against a watermarked model.")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--sig", required=True, help="owner signature (defines the filter to track)")
    sp.add_argument("--kind", required=True, choices=["fine_tune", "transfer", "prune", "piracy"])
    sp.add_argument("--mode", default="", help="FTLL/FTAL/RTLL/RTAL, LAST_LAYER/ALL_LAYERS or L1_ASCENDING/RANDOM")
    sp.add_argument("--epochs", type=int, default=30)
    sp.add_argument("--ratios", type=_floats, default=tuple(i / 10 for i in range(10)))
    sp.add_argument("--attacker-fraction", type=float, default=0.2)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--batch-size", type=int, default=64)
    sp.add_argument("--block", type=_shape, default=(4, 32))
    sp.add_argument("--oob", type=float, default=DEFAULT_OOB)
    sp.add_argument("--pub", help="owner public key (piracy)")
    sp.add_argument("--owner-id", help="owner id (piracy)")
    sp.add_argument("--timestamp", type=int, help="owner timestamp (piracy)")

    sp = add("run", cmd_run, "Run a full experiment from a manifest (default: the bundled one).")
    sp.add_argument("manifest", nargs="?", help="INI manifest; omit for the bundled default")

    sp = add("report", cmd_report, "Bundle a run directory's reports into one markdown file.")
    sp.add_argument("run_dir")
    sp.add_argument("--output", default="report.md")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    args.seed_given, args.out_dir_given = args.seed, args.out_dir
    if args.seed is None:
        args.seed = 0
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(message)s")
    ws = Workspace(args.out_dir or ".", args.force)
    try:
        return args.func(args, ws)
    except RefusedOverwrite as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXISTS
    except StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (SigningFailure, CheckpointError, RecordIntegrityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (FormatError, MetadataError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except EEGMarkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
