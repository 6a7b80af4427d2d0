import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import typer
from pydantic import ValidationError

from . import training
from .checkpoint import Checkpoint
from .config import load_config
from .data import QfMode, ingest
from .errors import HpgnError
from .jpeg_prior import QualityFactor, compress_roundtrip, compress_with_encoder, estimate_qf, qf_to_qm
from .metrics import psnr
from .selftest import run_selftest
from .settings import configure_logging
from .storage import read_image, write_png

logger = logging.getLogger(__name__)

USAGE_EXIT = 1

# typer may ship its own copy of click; take the classes it actually raises.
UsageError = next(cls for cls in typer.BadParameter.__mro__ if cls.__name__ == "UsageError")

app = typer.Typer(
    add_completion=False,
    no_args_is_help=True,
    help="Compressed low-light image enhancement guided by illumination and JPEG priors.",
)


def _qf_mode(text: str) -> QfMode:
    try:
        return QfMode.parse(text)
    except ValueError as exc:
        raise typer.BadParameter(str(exc))


@app.callback()
def main(verbose: bool = typer.Option(False, "--verbose", "-v", help="Log at DEBUG level.")) -> None:
    configure_logging("DEBUG" if verbose else None)


@app.command()
def compress(
    input_path: Path = typer.Option(..., "--in", exists=True, dir_okay=False, help="Input image."),
    qf: int = typer.Option(..., "--qf", min=1, max=100, help="JPEG quality factor."),
    out: Path = typer.Option(..., "--out", help="Output PNG."),
    encoder: bool = typer.Option(False, "--encoder", help="Use a real JPEG encoder instead of the simulated codec."),
) -> None:
    """Round-trip an image through JPEG quantization at the given QF."""
    image = read_image(input_path)
    result = (compress_with_encoder if encoder else compress_roundtrip)(image, qf)
    write_png(out, result)
    typer.echo(f"wrote {out} (QF {qf}, PSNR {psnr(result, image):.3f} dB)")


@app.command("inspect-qm")
def inspect_qm(
    qf: int = typer.Option(..., "--qf", min=1, max=100),
    chroma: bool = typer.Option(False, "--chroma", help="Show the chroma table."),
) -> None:
    """Print the 8×8 quantization table for a QF."""
    typer.echo(qf_to_qm(qf, "chroma" if chroma else "luma").format_grid())


@app.command("train")
def train_command(
    config: Path = typer.Option(..., "--config", exists=True, dir_okay=False),
    data: Path = typer.Option(..., "--data", exists=True, file_okay=False),
    out: Path = typer.Option(..., "--out", help="Checkpoint file."),
    resume: Optional[Path] = typer.Option(None, "--resume", exists=True, dir_okay=False),
) -> None:
    """Train a model and write its checkpoint."""
    train_config = load_config(config)
    ckpt = training.train(
        train_config,
        ingest(data),
        checkpoint_path=out,
        resume=Checkpoint.load(resume) if resume else None,
    )
    ckpt.save(out)
    final = f", final loss {ckpt.history[-1]:.6f}" if ckpt.history else ""
    typer.echo(f"wrote {out} at step {ckpt.step}{final}")


@app.command()
def enhance(
    ckpt: Path = typer.Option(..., "--ckpt", exists=True, dir_okay=False),
    input_path: Path = typer.Option(..., "--in", exists=True, dir_okay=False),
    qf: str = typer.Option(..., "--qf", help="Quality factor of the input, or 'auto' to estimate it."),
    out: Path = typer.Option(..., "--out"),
) -> None:
    """Enhance one compressed low-light image."""
    image = read_image(input_path)
    if qf == "auto":
        quality = estimate_qf(image)
        logger.info("estimated QF %d for %s", quality.value, input_path)
    else:
        try:
            quality = QualityFactor(value=int(qf))
        except ValueError:
            raise typer.BadParameter(f"expected 1-100 or 'auto', got {qf!r}", param_hint="'--qf'")
    model = training.model_from_checkpoint(Checkpoint.load(ckpt))
    write_png(out, model.predict(image, quality))
    typer.echo(f"wrote {out} (QF {quality.value})")


@app.command("eval")
def eval_command(
    ckpt: Path = typer.Option(..., "--ckpt", exists=True, dir_okay=False),
    data: Path = typer.Option(..., "--data", exists=True, file_okay=False),
    qf_mode: str = typer.Option("fixed(80)", "--qf-mode", help="fixed(Q) or random(LO,HI)."),
    report: Path = typer.Option(..., "--report"),
    seed: Optional[int] = typer.Option(None, "--seed", min=0, help="Defaults to the checkpoint's seed."),
) -> None:
    """Score a checkpoint on a paired dataset and write a metrics report."""
    mode = _qf_mode(qf_mode)
    result = training.evaluate(Checkpoint.load(ckpt), ingest(data), mode, seed)
    result.write(report)
    typer.echo(f"PSNR {result.mean_psnr:.3f} dB, SSIM {result.mean_ssim:.4f} over {len(result.records)} images")


@app.command()
def ablate(
    config: Path = typer.Option(..., "--config", exists=True, dir_okay=False),
    data: Path = typer.Option(..., "--data", exists=True, file_okay=False),
    out: Path = typer.Option(..., "--out", file_okay=False, help="Directory for checkpoints, reports and the table."),
    eval_data: Optional[Path] = typer.Option(None, "--eval-data", exists=True, file_okay=False),
) -> None:
    """Train and compare the baseline, QF-branch, QM-branch and full variants."""
    result = training.ablation(
        load_config(config),
        ingest(data),
        eval_data=ingest(eval_data) if eval_data else None,
        out_dir=out,
    )
    typer.echo(result.render(), nl=False)


@app.command()
def prepare(
    data: Path = typer.Option(..., "--data", exists=True, file_okay=False),
    qf_mode: str = typer.Option("random(10,90)", "--qf-mode"),
    seed: int = typer.Option(0, "--seed", min=0),
    out: Path = typer.Option(..., "--out", file_okay=False),
    encoder: bool = typer.Option(False, "--encoder", help="Use a real JPEG encoder instead of the simulated codec."),
) -> None:
    """Write a compressed copy of a paired dataset with a per-image QF manifest."""
    pairs = training.prepare_dataset(
        ingest(data, allow_encoded=False), _qf_mode(qf_mode), seed, out, "encoder" if encoder else "simulated"
    )
    typer.echo(f"wrote {len(pairs)} pairs to {out}")


@app.command()
def selftest() -> None:
    """Run the built-in invariant checks."""
    if not run_selftest(typer.echo):
        raise typer.Exit(code=2)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Invoke the CLI and return its exit code instead of exiting."""
    args = list(sys.argv[1:] if argv is None else argv)
    try:
        result = app(args=args, prog_name="hpgn", standalone_mode=False)
    except UsageError as exc:
        typer.echo(f"error: {exc.format_message()}", err=True)
        return USAGE_EXIT
    except typer.Abort:
        typer.echo("aborted", err=True)
        return USAGE_EXIT
    except ValidationError as exc:
        typer.echo(f"error: {exc.errors()[0]['msg']}", err=True)
        return USAGE_EXIT
    except HpgnError as exc:
        logger.debug("command failed", exc_info=True)
        typer.echo(f"error: {exc.detail}", err=True)
        return exc.exit_code
    return result if isinstance(result, int) else 0


def entrypoint() -> None:
    sys.exit(run())
