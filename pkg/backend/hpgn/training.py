import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .checkpoint import Checkpoint
from .config import TrainConfig, config_hash
from .data import (
    Codec,
    ImagePair,
    QfMode,
    compressed_low,
    ingest,
    make_batch,
    pair_qf,
)
from .errors import CheckpointError, ContractError, NonFiniteLossError
from .jpeg_prior import QualityFactor
from .losses import total_loss
from .metrics import MetricsRecord, MetricsReport, psnr, ssim
from .model import HPGN
from .optim import Adam
from .storage import atomic_write_text, write_png

logger = logging.getLogger(__name__)

# separate streams derived from the run seed
MODEL_STREAM = 1
EVAL_STREAM = 2
PREPARE_STREAM = 3

Predictor = Callable[[ImagePair, np.ndarray, QualityFactor], np.ndarray]


def build_model(config: TrainConfig) -> HPGN:
    return HPGN(config.model, np.random.default_rng([config.seed, MODEL_STREAM]))


def model_from_checkpoint(ckpt: Checkpoint) -> HPGN:
    model = build_model(ckpt.config)
    model.load_state_dict(ckpt.params)
    return model


def _snapshot(
    config: TrainConfig, model: HPGN, optimizer: Adam, rng: np.random.Generator, step: int, history: List[float]
) -> Checkpoint:
    return Checkpoint(
        config=config,
        step=step,
        params=model.state_dict(),
        optimizer={name: value.copy() for name, value in optimizer.state_dict().items()},
        adam_t=optimizer.t,
        rng_state=rng.bit_generator.state,
        history=list(history),
    )


def train(
    config: TrainConfig,
    data: Sequence[ImagePair],
    checkpoint_path: Optional[Union[str, Path]] = None,
    resume: Optional[Checkpoint] = None,
) -> Checkpoint:
    """
    Run the training loop and return the final checkpoint.

    With `resume`, parameters, Adam moments, the data RNG and the step
    counter are restored first, so the run continues exactly where the
    checkpoint was taken. Intermediate checkpoints go to `checkpoint_path`
    every `checkpoint_every` steps.
    """
    if not data:
        raise ContractError("training needs at least one image pair")
    model = build_model(config)
    optimizer = Adam(model.params(), lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    rng = np.random.default_rng(config.seed)
    start = 0
    history: List[float] = []

    if resume is not None:
        if resume.config_hash != config_hash(config):
            raise CheckpointError("cannot resume: checkpoint was written for a different config")
        model.load_state_dict(resume.params)
        optimizer.load_state_dict(resume.optimizer, resume.adam_t)
        rng.bit_generator.state = resume.rng_state
        start = resume.step
        history = list(resume.history)
        logger.info("resuming at step %d of %d", start, config.steps)

    logger.info(
        "training %d steps on %d pairs: %d parameters, qf %s, hash %s",
        config.steps, len(data), model.parameter_count(), config.qf_mode, config_hash(config)[:12],
    )
    for step in range(start, config.steps):
        batch = make_batch(data, rng, config, step)
        optimizer.zero_grad()
        outputs = model(batch.comp, batch.qfs, batch.qms)
        loss = total_loss(outputs.enhanced, batch.high, config.loss)
        value = loss.item()
        if not math.isfinite(value):
            raise NonFiniteLossError(
                f"loss became {value} at step {step + 1}; batch {batch.names} with qf {[q.value for q in batch.qfs]}"
            )
        loss.backward()
        optimizer.step()
        history.append(value)

        done = step + 1
        if done % config.log_every == 0 or done == config.steps:
            logger.info("step %d/%d loss %.6f qf %s", done, config.steps, value, [q.value for q in batch.qfs])
        if checkpoint_path and config.checkpoint_every and done % config.checkpoint_every == 0:
            _snapshot(config, model, optimizer, rng, done, history).save(checkpoint_path)

    return _snapshot(config, model, optimizer, rng, max(start, config.steps), history)


def evaluate_predictor(
    predictor: Predictor,
    data: Sequence[ImagePair],
    qf_mode: QfMode,
    seed: int,
    run_hash: str = "",
    codec: Codec = "simulated",
) -> MetricsReport:
    """Score `predictor(pair, compressed_low, qf)` against each pair's high image."""
    rng = np.random.default_rng([seed, EVAL_STREAM])
    report = MetricsReport(seed=seed, config_hash=run_hash, qf_mode=str(qf_mode))
    for pair in data:
        qf = pair_qf(pair, rng, qf_mode)
        prediction = predictor(pair, compressed_low(pair, qf, codec), qf)
        report.records.append(
            MetricsRecord(path=pair.name, qf=qf.value, psnr_db=psnr(prediction, pair.high), ssim=ssim(prediction, pair.high))
        )
    logger.info(
        "evaluated %d images at %s: PSNR %.3f dB, SSIM %.4f", len(data), qf_mode, report.mean_psnr, report.mean_ssim
    )
    return report


def evaluate(ckpt: Checkpoint, data: Sequence[ImagePair], qf_mode: QfMode, seed: Optional[int] = None) -> MetricsReport:
    model = model_from_checkpoint(ckpt)
    return evaluate_predictor(
        lambda pair, comp, qf: model.predict(comp, qf),
        data,
        qf_mode,
        ckpt.config.seed if seed is None else seed,
        ckpt.config_hash,
        ckpt.config.codec,
    )


def evaluate_input_baseline(
    data: Sequence[ImagePair], qf_mode: QfMode, seed: int = 0, codec: Codec = "simulated"
) -> MetricsReport:
    """Metrics of the compressed input itself against the target."""
    return evaluate_predictor(lambda pair, comp, qf: comp, data, qf_mode, seed, "input", codec)


# Table rows in order: IE only, then each HIF branch, then both.
ABLATION_VARIANTS: Dict[str, Dict[str, object]] = {
    "baseline": dict(use_illumination=False, use_qf_branch=False, use_qm_branch=False, trunk_input="comp"),
    "qf_branch": dict(use_illumination=True, use_qf_branch=True, use_qm_branch=False, trunk_input="light_up"),
    "qm_branch": dict(use_illumination=True, use_qf_branch=False, use_qm_branch=True, trunk_input="light_up"),
    "full": dict(use_illumination=True, use_qf_branch=True, use_qm_branch=True, trunk_input="light_up"),
}


@dataclass
class VariantResult:
    name: str
    config: TrainConfig
    checkpoint: Checkpoint
    report: MetricsReport
    parameter_count: int

    @property
    def final_loss(self) -> float:
        return self.checkpoint.history[-1] if self.checkpoint.history else math.nan


@dataclass
class AblationResult:
    variants: Dict[str, VariantResult] = field(default_factory=dict)

    @property
    def reports(self) -> Dict[str, MetricsReport]:
        return {name: result.report for name, result in self.variants.items()}

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for name, result in self.variants.items():
            flags = result.config.model
            rows.append(
                {
                    "Variant": name,
                    "Baseline": "✓",
                    "QF-branch": "✓" if flags.use_qf_branch else "",
                    "QM-branch": "✓" if flags.use_qm_branch else "",
                    "Params": result.parameter_count,
                    "PSNR (dB)": round(result.report.mean_psnr, 3),
                    "SSIM": round(result.report.mean_ssim, 3),
                    "Final loss": round(result.final_loss, 6),
                }
            )
        return pd.DataFrame(rows)

    def render(self) -> str:
        return self.to_frame().to_string(index=False) + "\n"


def ablation(
    config: TrainConfig,
    data: Sequence[ImagePair],
    eval_data: Optional[Sequence[ImagePair]] = None,
    out_dir: Optional[Union[str, Path]] = None,
) -> AblationResult:
    """Train and evaluate the four variants under one seed and step count."""
    eval_data = data if eval_data is None else eval_data
    result = AblationResult()
    for name, flags in ABLATION_VARIANTS.items():
        variant = config.with_model(**flags)
        logger.info("ablation variant %s", name)
        ckpt = train(variant, data)
        report = evaluate(ckpt, eval_data, variant.qf_mode)
        result.variants[name] = VariantResult(name, variant, ckpt, report, build_model(variant).parameter_count())
        if out_dir is not None:
            ckpt.save(Path(out_dir) / f"{name}.ckpt")
            report.write(Path(out_dir) / f"{name}.txt")
    if out_dir is not None:
        atomic_write_text(Path(out_dir) / "ablation.txt", result.render())
    return result


def prepare_dataset(
    data: Sequence[ImagePair],
    qf_mode: QfMode,
    seed: int,
    out_dir: Union[str, Path],
    codec: Codec = "simulated",
) -> List[ImagePair]:
    """
    Write a compressed copy of a paired dataset: `low/` holds the compressed
    inputs, `high/` the targets, `qf.txt` the QF drawn for each image.
    """
    out_dir = Path(out_dir)
    rng = np.random.default_rng([seed, PREPARE_STREAM])
    manifest = [f"# qf_mode={qf_mode} seed={seed} codec={codec}"]
    for pair in data:
        qf = pair_qf(pair, rng, qf_mode)
        stem = Path(pair.name).stem
        write_png(out_dir / "low" / f"{stem}.png", compressed_low(pair, qf, codec))
        write_png(out_dir / "high" / f"{stem}.png", pair.high)
        manifest.append(f"{stem}.png {qf.value}")
    atomic_write_text(out_dir / "qf.txt", "\n".join(manifest) + "\n")
    logger.info("prepared %d compressed pairs in %s", len(data), out_dir)
    return ingest(out_dir)
