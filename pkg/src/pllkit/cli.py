"""Command-line front end: gen, filter, train, eval, and the chained pipeline.

Each stage reads a TOML config (flat sections of key=value pairs), writes its
outputs under [paths].out_dir, and appends one line to manifest.log recording
the stage name, seed, resolved flag overrides, and sha256 hashes of every
input and output file. Nothing in the outputs depends on wall-clock time, so
identical config and seed reproduce identical bytes.

Exit codes: 0 success, 2 configuration or file-format problems, 3 numerical
failures during training.
"""

import argparse
import hashlib
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import formats, generate, metrics, zeroshot
from .classifier import TrainConfig, fit, load_model, save_model
from .data import LabelSpace, PLLDataset
from .errors import ConfigError, FormatError, NumericalError
from .objectives import parse_objective

STAGES = ("gen", "filter", "train", "eval", "pipeline")

_SECTION_KEYS = {
    "paths": {
        "features", "labels", "candidates", "text_embeddings", "confidences",
        "out_dir", "eval_features", "eval_labels", "eval_candidates", "model",
    },
    "gen": {"strategy", "eta", "top_fraction", "gamma", "seed"},
    "filter": {"k", "temperature"},
    "train": {
        "objective", "lr", "momentum", "weight_decay", "batch_size", "epochs",
        "seed", "use_adapter", "adapter_dim", "adapter_scale", "text_init",
        "protect_init", "beta", "q", "lam", "noise_sigma", "m", "tau",
        "sinkhorn_eps", "sinkhorn_iters", "dist_momentum", "purge_rate",
    },
    "eval": {"per_class_csv"},
}

_OBJECTIVE_PARAM_KEYS = (
    "beta", "q", "lam", "noise_sigma", "m", "tau",
    "sinkhorn_eps", "sinkhorn_iters", "dist_momentum", "purge_rate",
)


def _load_config(path):
    try:
        with open(path, "rb") as fh:
            config = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    for section, table in config.items():
        allowed = _SECTION_KEYS.get(section)
        if allowed is None:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(table, dict):
            raise ConfigError(f"config key {section} must be a section")
        for key in table:
            if key not in allowed:
                raise ConfigError(f"unknown config key {section}.{key}")
    return config


def _worker_cap():
    raw = os.environ.get("PLL_THREADS")
    if raw is None:
        return 0
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(f"PLL_THREADS must be an integer, got {raw!r}") from None
    if cap < 0:
        raise ConfigError(f"PLL_THREADS must be >= 0, got {cap}")
    return cap


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _manifest_line(stage, seed, overrides, inputs, outputs):
    def files(pairs):
        return ",".join(
            f"{os.path.basename(p)}:{_sha256(p)}" for p in sorted(pairs, key=os.path.basename)
        ) or "none"

    ov = ",".join(f"{k}={v}" for k, v in sorted(overrides.items())) or "none"
    return f"stage={stage} seed={seed} overrides={ov} in={files(inputs)} out={files(outputs)}\n"


class _Workspace:
    """Resolved paths for one run; later stages prefer earlier stages' outputs."""

    def __init__(self, config, config_dir):
        self.paths = config.get("paths", {})
        self.config_dir = config_dir
        out = self.paths.get("out_dir")
        if not out:
            raise ConfigError("missing config key paths.out_dir")
        self.out_dir = self._abs(out)
        os.makedirs(self.out_dir, exist_ok=True)

    def _abs(self, p):
        return p if os.path.isabs(p) else os.path.join(self.config_dir, p)

    def out(self, name):
        return os.path.join(self.out_dir, name)

    def configured(self, key, required_by=None):
        value = self.paths.get(key)
        if value is None:
            if required_by:
                raise ConfigError(f"missing config key paths.{key} (needed by {required_by})")
            return None
        path = self._abs(value)
        if not os.path.exists(path):
            raise ConfigError(f"paths.{key}: file not found: {path}")
        return path

    def resolve(self, key, generated_names, required_by=None):
        """Prefer files produced earlier in this out_dir, else paths.<key>."""
        for name in generated_names:
            candidate = self.out(name)
            if os.path.exists(candidate):
                return candidate
        return self.configured(key, required_by=required_by)

    def append_manifest(self, line):
        with open(self.out("manifest.log"), "a", encoding="utf-8", newline="\n") as fh:
            fh.write(line)

    GENERATED = (
        "manifest.log", "candidates.pllc", "labels.plly", "features.pllf",
        "confidences.pllf", "candidates_filtered.pllc", "model.pllm",
        "report.txt", "eval_report.txt", "per_class.csv",
    )

    def reset_outputs(self):
        """Drop earlier generated files so a pipeline rerun resolves inputs
        identically and reproduces byte-identical outputs and manifest."""
        for name in self.GENERATED:
            path = self.out(name)
            if os.path.exists(path):
                os.remove(path)
        open(self.out("manifest.log"), "w", encoding="utf-8").close()


def _stage_gen(config, ws, overrides):
    section = dict(config.get("gen", {}))
    if "eta" in overrides:
        section["eta"] = overrides["eta"]
    if "gamma" in overrides:
        section["gamma"] = overrides["gamma"]
    if "seed" in overrides:
        section["seed"] = overrides["seed"]
    strategy = section.get("strategy", "fps")
    seed = int(section.get("seed", 0))
    gamma = float(section.get("gamma", 1.0))

    labels_path = ws.configured("labels", required_by="gen")
    labels, n_classes = formats.read_labels_file(labels_path)
    inputs = [labels_path]

    features = None
    features_path = ws.configured("features")
    if strategy == "instance":
        if features_path is None:
            raise ConfigError("missing config key paths.features (needed by gen.strategy=instance)")
    if features_path is not None:
        features = formats.read_matrix_file(features_path)
        inputs.append(features_path)

    outputs = []
    if gamma > 1.0:
        if features is None:
            raise ConfigError("paths.features is required when gen.gamma > 1 "
                              "(features must be subsampled alongside labels)")
        idx = generate.subsample_longtail_indices(labels, n_classes, gamma, seed=seed)
        labels = labels[idx]
        labels_out = ws.out("labels.plly")
        formats.write_labels_file(labels, n_classes, labels_out)
        outputs.append(labels_out)
        if features is not None:
            features = features[idx]
            features_out = ws.out("features.pllf")
            formats.write_matrix_file(features, features_out)
            outputs.append(features_out)

    spec = generate.GenSpec(
        strategy=strategy,
        eta=float(section["eta"]) if "eta" in section else 0.5,
        top_fraction=float(section.get("top_fraction", 0.1)),
        seed=seed,
    )
    bits = generate.generate_candidates(spec, labels, n_classes, features=features)
    cand_out = ws.out("candidates.pllc")
    formats.write_candidates_file(bits, cand_out)
    outputs.append(cand_out)

    ws.append_manifest(_manifest_line("gen", seed, overrides, inputs, outputs))


def _stage_filter(config, ws, overrides):
    section = dict(config.get("filter", {}))
    if "k" in overrides:
        section["k"] = overrides["k"]
    temperature = float(section.get("temperature", zeroshot.DEFAULT_TEMPERATURE))

    cand_path = ws.resolve("candidates", ["candidates.pllc"], required_by="filter")
    candidates = formats.read_candidates_file(cand_path)
    inputs = [cand_path]
    outputs = []

    conf_path = ws.resolve("confidences", ["confidences.pllf"])
    if conf_path is not None:
        conf = formats.read_matrix_file(conf_path)
        inputs.append(conf_path)
    else:
        feats_path = ws.resolve("features", ["features.pllf"], required_by="filter")
        text_path = ws.configured("text_embeddings", required_by="filter")
        conf = zeroshot.zeroshot_confidence(
            formats.read_matrix_file(feats_path),
            formats.read_matrix_file(text_path),
            temperature=temperature,
        )
        inputs.extend([feats_path, text_path])
        conf_out = ws.out("confidences.pllf")
        formats.write_matrix_file(conf, conf_out)
        outputs.append(conf_out)

    k = int(section["k"]) if "k" in section else None
    filtered = zeroshot.filter_topk(candidates, conf, zeroshot.FilterSpec(k=k))
    out_path = ws.out("candidates_filtered.pllc")
    formats.write_candidates_file(filtered, out_path)
    outputs.append(out_path)

    seed = int(overrides.get("seed", 0))
    ws.append_manifest(_manifest_line("filter", seed, overrides, inputs, outputs))


def _train_config(section, overrides, text_init):
    params = {k: section[k] for k in _OBJECTIVE_PARAM_KEYS if k in section}
    objective = parse_objective(
        overrides.get("objective", section.get("objective", "cc")), **params
    )
    return TrainConfig(
        lr=float(section.get("lr", 0.01)),
        momentum=float(section.get("momentum", 0.9)),
        weight_decay=float(section.get("weight_decay", 5e-4)),
        batch_size=int(section.get("batch_size", 64)),
        epochs=int(overrides.get("epochs", section.get("epochs", 10))),
        seed=int(overrides.get("seed", section.get("seed", 0))),
        objective=objective,
        use_adapter=bool(section.get("use_adapter", False)),
        adapter_dim=int(section["adapter_dim"]) if "adapter_dim" in section else None,
        adapter_scale=float(section.get("adapter_scale", 1.0)),
        text_init=text_init,
        protect_init=bool(section.get("protect_init", False)),
    )


def _stage_train(config, ws, overrides):
    section = dict(config.get("train", {}))

    feats_path = ws.resolve("features", ["features.pllf"], required_by="train")
    cand_path = ws.resolve(
        "candidates", ["candidates_filtered.pllc", "candidates.pllc"], required_by="train"
    )
    features = formats.read_matrix_file(feats_path)
    candidates = formats.read_candidates_file(cand_path)
    inputs = [feats_path, cand_path]

    labels = None
    labels_path = ws.resolve("labels", ["labels.plly"])
    if labels_path is not None:
        labels, _ = formats.read_labels_file(labels_path)
        inputs.append(labels_path)

    text_init = None
    if section.get("text_init", False):
        text_path = ws.configured("text_embeddings", required_by="train.text_init")
        text_init = formats.read_matrix_file(text_path)
        inputs.append(text_path)

    eval_features = eval_labels = eval_candidates = None
    ef_path = ws.configured("eval_features")
    if ef_path is not None:
        eval_features = formats.read_matrix_file(ef_path)
        inputs.append(ef_path)
        el_path = ws.configured("eval_labels")
        if el_path is not None:
            eval_labels, _ = formats.read_labels_file(el_path)
            inputs.append(el_path)
        ec_path = ws.configured("eval_candidates")
        if ec_path is not None:
            eval_candidates = formats.read_candidates_file(ec_path)
            inputs.append(ec_path)

    cfg = _train_config(section, overrides, text_init)
    ds = PLLDataset(
        features=features,
        candidates=candidates,
        space=LabelSpace(candidates.shape[1]),
        oracle_labels=labels,
    )
    model, _, report = fit(
        ds, cfg=cfg, eval_features=eval_features, eval_labels=eval_labels,
        eval_candidates=eval_candidates,
    )

    model_out = ws.out("model.pllm")
    save_model(model, model_out)
    outputs = [model_out]

    extra = {
        "objective": report.objective,
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "final_train_loss": f"{report.epochs[-1].loss:.6f}",
    }
    if report.epochs[-1].train_acc is not None:
        extra["final_train_acc"] = f"{report.epochs[-1].train_acc:.6f}"
    block = report.final if report.final is not None else metrics.MetricBlock()
    report_out = ws.out("report.txt")
    metrics.write_report(report_out, block, extra)
    outputs.append(report_out)

    ws.append_manifest(_manifest_line("train", cfg.seed, overrides, inputs, outputs))


def _stage_eval(config, ws, overrides):
    section = dict(config.get("eval", {}))
    model_path = ws.resolve("model", ["model.pllm"], required_by="eval")
    model = load_model(model_path)
    feats_path = ws.configured("eval_features", required_by="eval")
    features = formats.read_matrix_file(feats_path)
    inputs = [model_path, feats_path]

    labels = None
    labels_path = ws.configured("eval_labels")
    if labels_path is not None:
        labels, _ = formats.read_labels_file(labels_path)
        inputs.append(labels_path)
    candidates = None
    cand_path = ws.configured("eval_candidates")
    if cand_path is not None:
        candidates = formats.read_candidates_file(cand_path)
        inputs.append(cand_path)

    train_counts = None
    train_labels_path = ws.resolve("labels", ["labels.plly"])
    if train_labels_path is not None:
        train_labels, k = formats.read_labels_file(train_labels_path)
        train_counts = np.bincount(train_labels, minlength=k)
        inputs.append(train_labels_path)

    preds = model.predict(features)
    block = metrics.evaluate_block(
        preds, oracle_labels=labels, candidates=candidates, train_class_counts=train_counts
    )
    report_out = ws.out("eval_report.txt")
    metrics.write_report(report_out, block, {"n_eval": preds.size})
    outputs = [report_out]

    if section.get("per_class_csv", False) and labels is not None:
        csv_out = ws.out("per_class.csv")
        metrics.write_per_class_csv(csv_out, preds, labels, model.n_classes)
        outputs.append(csv_out)

    seed = int(overrides.get("seed", 0))
    ws.append_manifest(_manifest_line("eval", seed, overrides, inputs, outputs))


_STAGE_FNS = {
    "gen": _stage_gen,
    "filter": _stage_filter,
    "train": _stage_train,
    "eval": _stage_eval,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="pll", description="partial-label learning pipeline"
    )
    sub = parser.add_subparsers(dest="stage", required=True)
    for stage in STAGES:
        p = sub.add_parser(stage)
        p.add_argument("--config", required=True)
        p.add_argument("--eta", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--k", type=int)
        p.add_argument("--objective")
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)
    return parser


def run(argv=None):
    """Execute one subcommand; returns the process exit code."""
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    overrides = {
        key: getattr(args, key)
        for key in ("eta", "gamma", "k", "objective", "seed", "epochs")
        if getattr(args, key) is not None
    }

    try:
        _worker_cap()
        config = _load_config(args.config)
        ws = _Workspace(config, os.path.dirname(os.path.abspath(args.config)))
        if args.stage == "pipeline":
            ws.reset_outputs()
            for stage in ("gen", "filter", "train", "eval"):
                if stage in config:
                    _STAGE_FNS[stage](config, ws, overrides)
        else:
            _STAGE_FNS[args.stage](config, ws, overrides)
    except (ConfigError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
