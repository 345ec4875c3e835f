"""Umbrella command-line interface.

Report-producing subcommands write delimited tables plus rendered PNG
figures into their --out directory; model-producing ones write checkpoint
containers. `imk serve` fronts the HTTP decode service.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import analysis, metrics, plots, synthetic
from .data import (
    SessionMeta,
    TouchPoint,
    clean_corpus_text,
    default_vocab,
    load_dataset,
    save_dataset,
)
from .model import ModelConfig, SANCDModel, default_heads
from .model.sancd import pixel_prediction_map
from .training import (
    EarlyStopping,
    OptimizerSpec,
    evaluate,
    finetune,
    load_checkpoint,
    pretrain_geometric,
    pretrain_semantic,
    save_checkpoint,
)


def _echo(msg: str):
    click.echo(msg)


def _load_config(path: str | None) -> tuple[ModelConfig, OptimizerSpec]:
    if path is None:
        cfg = ModelConfig(layers=2, d_h=64, n_heads=default_heads(64))
        return cfg, OptimizerSpec()
    raw = json.loads(Path(path).read_text())
    model_d = raw.get("model", {})
    if "n_heads" not in model_d and "d_h" in model_d:
        model_d["n_heads"] = default_heads(model_d["d_h"])
    cfg = ModelConfig.from_dict({**ModelConfig().to_dict(), **model_d})
    opt = OptimizerSpec.from_dict({**OptimizerSpec().to_dict(), **raw.get("optimizer", {})})
    return cfg, opt


def _auto_split(data, train_frac=0.8, val_frac=0.1):
    ids = sorted({p.meta.participant_id for p in data})
    n = len(ids)
    n_train = max(1, int(round(n * train_frac)))
    n_val = max(1, int(round(n * val_frac))) if n > 2 else 0
    train_ids = set(ids[:n_train])
    val_ids = set(ids[n_train : n_train + n_val])
    test_ids = set(ids[n_train + n_val :])
    train = [p for p in data if p.meta.participant_id in train_ids]
    val = [p for p in data if p.meta.participant_id in val_ids] or train
    test = [p for p in data if p.meta.participant_id in test_ids]
    return train, val, test


@click.group()
def main():
    """Invisible-keyboard decoding toolkit."""


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def analyze(data_path, out_dir):
    """Behavioral statistics: CSV tables plus rendered figures."""
    data = load_dataset(data_path)
    stats = analysis.char_position_stats(data)
    zseries = analysis.z_series(data, stats)
    so = analysis.scale_offset_stats(data)
    paths = analysis.export_analysis(stats, zseries, so, out_dir)
    out = Path(out_dir)
    paths.append(plots.plot_z_series(zseries, out / "z_series.png"))
    paths.append(plots.plot_key_centroids(stats, out / "key_centroids.png"))
    paths.append(plots.plot_scale_offset(so, out / "scale_offset.png"))
    for p in paths:
        _echo(f"wrote {p}")


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None, help="SynthSpec JSON")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None, help="phrases, one per line")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def synth(spec_path, corpus_path, seed, out_path):
    """Generate a synthetic typed-phrase dataset (JSONL)."""
    spec = synthetic.SynthSpec.from_json(Path(spec_path).read_text()) if spec_path else synthetic.SynthSpec()
    if corpus_path:
        phrases = [l.strip() for l in Path(corpus_path).read_text().splitlines() if l.strip()]
    else:
        phrases = synthetic.make_phrases(spec.n_users * spec.phrases_per_user, seed)
    data = synthetic.synthesize_dataset(spec, phrases, seed)
    save_dataset(data, out_path)
    _echo(f"wrote {len(data)} phrases to {out_path}")


@main.command("metrics")
@click.option("--hyp", "hyp_path", required=True, type=click.Path(exists=True))
@click.option("--ref", "ref_path", required=True, type=click.Path(exists=True))
def metrics_cmd(hyp_path, ref_path):
    """Corpus CER/WER between two line-aligned text files."""
    hyps = Path(hyp_path).read_text().splitlines()
    refs = Path(ref_path).read_text().splitlines()
    if len(hyps) != len(refs):
        raise click.ClickException(f"line count mismatch: {len(hyps)} vs {len(refs)}")
    cer_pct, wer_pct = metrics.corpus_error_rates(list(zip(hyps, refs)))
    _echo(json.dumps({"cer_pct": cer_pct, "wer_pct": wer_pct}))


@main.command("pretrain-lm")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--epochs", default=50, show_default=True)
@click.option("--batch-size", default=64, show_default=True)
def pretrain_lm_cmd(corpus_path, config_path, seed, out_dir, epochs, batch_size):
    """Masked-character-LM pretraining of the semantic stage."""
    cfg, opt_spec = _load_config(config_path)
    vocab = default_vocab()
    sentences = [
        clean_corpus_text(line, vocab, cfg.max_len)
        for line in Path(corpus_path).read_text().splitlines()
    ]
    sentences = [s for s in sentences if s]
    model = SANCDModel(cfg, vocab, seed=seed)
    history = pretrain_semantic(
        sentences, model, opt_spec, EarlyStopping(), seed=seed, max_epochs=epochs,
        batch_size=batch_size, log=_echo,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "pretrain_lm.ckpt", model)
    plots.write_history_csv(history, out / "pretrain_lm_history.csv")
    plots.plot_history(history, out / "pretrain_lm_history.png")
    _echo(f"wrote {out / 'pretrain_lm.ckpt'}")


@main.command("pretrain-geo")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--init", "init_ckpt", type=click.Path(exists=True), default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--epochs", default=50, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
def pretrain_geo_cmd(data_path, config_path, init_ckpt, seed, out_dir, epochs, batch_size):
    """Geometric-stage pretraining on a typed-phrase dataset."""
    cfg, opt_spec = _load_config(config_path)
    data = load_dataset(data_path)
    train, val, _ = _auto_split(data)
    if init_ckpt:
        model = load_checkpoint(init_ckpt).model
    else:
        model = SANCDModel(cfg, default_vocab(), seed=seed)
    history = pretrain_geometric(
        train, model, opt_spec, EarlyStopping(), val=val, seed=seed,
        max_epochs=epochs, batch_size=batch_size, log=_echo,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "pretrain_geo.ckpt", model)
    plots.write_history_csv(history, out / "pretrain_geo_history.csv")
    plots.plot_history(history, out / "pretrain_geo_history.png")
    _echo(f"wrote {out / 'pretrain_geo.ckpt'}")


@main.command("finetune")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--init", "init_ckpt", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--epochs", default=40, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--straight-through", is_flag=True, default=False, help="experimental end-to-end geometric loss")
def finetune_cmd(data_path, init_ckpt, config_path, seed, out_dir, epochs, batch_size, straight_through):
    """Alternating-freeze fine-tuning from a pretrained checkpoint."""
    _, opt_spec = _load_config(config_path)
    data = load_dataset(data_path)
    train, val, _ = _auto_split(data)
    model = load_checkpoint(init_ckpt).model
    history = finetune(
        model, train, val, opt_spec, EarlyStopping(), seed=seed, max_epochs=epochs,
        batch_size=batch_size, straight_through=straight_through, log=_echo,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "finetuned.ckpt", model)
    plots.write_history_csv(history, out / "finetune_history.csv")
    plots.plot_history(history, out / "finetune_history.png")
    _echo(f"wrote {out / 'finetuned.ckpt'}")


@main.command("eval")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--set", "set_name", default="eval", show_default=True)
@click.option("--mode", type=click.Choice(["full", "geometric"]), default="full", show_default=True)
def eval_cmd(data_path, ckpt_path, report_path, set_name, mode):
    """Decode a dataset and write the evaluation report JSON."""
    from .model import GeometricOnlyDecoder

    data = load_dataset(data_path)
    model = load_checkpoint(ckpt_path).model
    decoder = GeometricOnlyDecoder(model) if mode == "geometric" else model
    report = evaluate(decoder, data, set_name)
    Path(report_path).write_text(report.to_json() + "\n")
    _echo(report.to_json())


@main.command("heatmap")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--step", default=40, show_default=True)
@click.option("--screen", default="1080x1920", show_default=True, help="WxH pixels")
@click.option("--prefix", "prefix_path", type=click.Path(exists=True), default=None,
              help="JSON list of [x, y, t_ms] prefix points")
def heatmap_cmd(ckpt_path, out_dir, step, screen, prefix_path):
    """Pixel-wise prediction map for a prefix, as CSV and PNG."""
    w, h = (int(v) for v in screen.lower().split("x"))
    model = load_checkpoint(ckpt_path).model
    meta = SessionMeta(participant_id="grid", age=0, device="cli", screen_w=w, screen_h=h)
    prefix = []
    if prefix_path:
        prefix = [TouchPoint(float(x), float(y), int(t)) for x, y, t in json.loads(Path(prefix_path).read_text())]
    grid = pixel_prediction_map(model, prefix, meta, step)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "prediction_map.csv"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        for row in grid.chars:
            fh.write(",".join("SPACE" if c == " " else c for c in row))
            fh.write("\n")
    png = plots.plot_prediction_map(grid, out / "prediction_map.png")
    _echo(f"wrote {csv_path}")
    _echo(f"wrote {png}")


@main.command("serve")
@click.option("--ckpt", "ckpt_path", type=click.Path(exists=True), default=None,
              help="checkpoint path (or IMK_CKPT)")
@click.option("--addr", default=None, help="host:port (or IMK_ADDR; default 127.0.0.1:8000)")
@click.option("--ui", "ui_dir", type=click.Path(exists=True), default=None, help="static UI bundle to serve")
def serve_cmd(ckpt_path, addr, ui_dir):
    """Run the HTTP decode service."""
    import uvicorn

    from .service import create_app, resolve_addr

    ckpt_path = os.environ.get("IMK_CKPT") or ckpt_path
    if not ckpt_path:
        raise click.ClickException("no checkpoint: pass --ckpt or set IMK_CKPT")
    model = load_checkpoint(ckpt_path).model
    host, port = resolve_addr(addr)
    app = create_app(model, ui_dir=ui_dir)
    _echo(f"serving on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    sys.exit(main())
