"""Quick invariant suite behind `hpgn selftest`."""
import logging
import math
from typing import Callable, Tuple

import numpy as np

from .checkpoint import Checkpoint
from .config import TrainConfig
from .data import QfMode, sample_qf
from .enhancer import EnhancerConfig, ImageEnhancer
from .gradcheck import gradcheck
from .hif import HybridInformationFilter, fuse
from .illumination import illum_prior, light_up
from .jpeg_prior import BASE_LUMA, compress_roundtrip, dct8x8, qf_to_qm, qf_to_scale
from .losses import LossConfig, total_loss
from .metrics import psnr, ssim
from .tensor import Tensor, conv2d, mean, precision, up2
from .training import build_model

logger = logging.getLogger(__name__)

Check = Callable[[], Tuple[bool, str]]


def _smooth_image(rng: np.random.Generator, size: int = 32) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size] / size
    base = np.stack([0.5 + 0.4 * np.sin(2 * x + c) * np.cos(3 * y - c) for c in range(3)], axis=-1)
    noisy = base * 255 + rng.normal(0, 2, base.shape)
    return np.clip(np.round(noisy), 0, 255).astype(np.uint8)


class InvariantSuite:
    def __init__(self, echo: Callable[[str], None] = print, seed: int = 0):
        self.echo = echo
        self.rng = np.random.default_rng(seed)
        self.tests_run = 0
        self.tests_passed = 0

    def run_check(self, name: str, check: Check) -> bool:
        self.tests_run += 1
        self.echo(f"🔍 Checking {name}...")
        try:
            success, detail = check()
        except Exception as exc:  # report and keep going
            self.echo(f"❌ Failed - Error: {exc}")
            return False
        if success:
            self.tests_passed += 1
            self.echo(f"✅ Passed - {detail}")
        else:
            self.echo(f"❌ Failed - {detail}")
        return success

    def check_qm_tables(self) -> Tuple[bool, str]:
        ok = np.array_equal(qf_to_qm(50).entries, BASE_LUMA) and np.all(qf_to_qm(100).entries == 1)
        ok = ok and qf_to_qm(10).entries[0, 0] == 80
        return ok, "QF 50 gives the base table, QF 100 all ones"

    def check_scale(self) -> Tuple[bool, str]:
        expected = {1: 5000, 10: 500, 25: 200, 50: 100, 75: 50, 100: 0}
        got = {qf: qf_to_scale(qf) for qf in expected}
        return got == expected, f"scales {got}"

    def check_dct(self) -> Tuple[bool, str]:
        blocks = self.rng.uniform(-128, 127, (1000, 8, 8))
        coeffs = dct8x8(blocks, "forward")
        restored = dct8x8(coeffs, "inverse")
        identity = np.max(np.abs(restored - blocks))
        parseval = np.max(np.abs(np.sum(blocks**2, axis=(1, 2)) - np.sum(coeffs**2, axis=(1, 2))) / np.sum(blocks**2, axis=(1, 2)))
        return identity <= 1e-6 and parseval <= 1e-6, f"inverse error {identity:.2e}, energy error {parseval:.2e}"

    def check_roundtrip(self) -> Tuple[bool, str]:
        image = _smooth_image(self.rng)
        lossless = psnr(compress_roundtrip(image, 100), image)
        coarse, fine = psnr(compress_roundtrip(image, 10), image), psnr(compress_roundtrip(image, 90), image)
        return lossless >= 45 and fine > coarse, f"QF100 {lossless:.2f} dB, QF10 {coarse:.2f} < QF90 {fine:.2f} dB"

    def check_priors(self) -> Tuple[bool, str]:
        with precision("float64"):
            x = Tensor(self.rng.uniform(0, 1, (2, 3, 8, 8)))
            bri = Tensor(self.rng.uniform(0.5, 2, (2, 3, 8, 8)))
            prior_ok = np.array_equal(illum_prior(x).data, x.data.mean(axis=1, keepdims=True))
            light_ok = np.array_equal(light_up(Tensor(np.ones(x.shape)), x).data, x.data)
            light_ok = light_ok and np.array_equal(light_up(bri, x).data, bri.data * x.data)
            fuse_ok = np.array_equal(fuse(x, Tensor(np.zeros(x.shape))).data, x.data)
        return prior_ok and light_ok and fuse_ok, "illumination prior, light-up and fuse match their definitions"

    def check_identities(self) -> Tuple[bool, str]:
        with precision("float64"):
            enhancer = ImageEnhancer(EnhancerConfig(num_rmrb=1, num_mrb_per_rmrb=1, width=8), self.rng).zero_parameters()
            x = Tensor(self.rng.uniform(0, 1, (1, 3, 8, 8)))
            enhancer_ok = np.array_equal(enhancer(x).data, x.data)
            hif = HybridInformationFilter(8, self.rng).zero_parameters()
            features = Tensor(self.rng.normal(size=(1, 8, 8, 8)))
            out = hif(features, 80, qf_to_qm(80))
            hif_ok = np.array_equal(out.data, features.data * 1.5)
        return enhancer_ok and hif_ok, "zero enhancer is the identity, zero HIF gives 1.5·F"

    def check_gradients(self) -> Tuple[bool, str]:
        with precision("float64"):
            x = Tensor(self.rng.normal(size=(1, 2, 6, 6)), requires_grad=True)
            w = Tensor(self.rng.normal(size=(3, 2, 3, 3)), requires_grad=True)
            conv_err = gradcheck(lambda: mean(conv2d(x, w, padding=1) * conv2d(x, w, padding=1)), [x, w], eps=1e-6)
            u = Tensor(self.rng.normal(size=(1, 2, 4, 4)), requires_grad=True)
            direction = Tensor(self.rng.normal(size=(1, 2, 8, 8)))
            up_err = gradcheck(lambda: mean(up2(u) * direction), [u], eps=1e-6)
        worst = max(conv_err, up_err)
        return worst <= 1e-5, f"worst relative error {worst:.2e}"

    def check_metrics(self) -> Tuple[bool, str]:
        image = _smooth_image(self.rng)
        one_level = psnr(np.full((16, 16, 3), 100, np.uint8), np.full((16, 16, 3), 101, np.uint8))
        ok = math.isinf(psnr(image, image)) and ssim(image, image) == 1.0
        ok = ok and abs(one_level - 20 * math.log10(255)) < 1e-9 and ssim(image, 255 - image) < 1
        return ok, f"identical → inf / 1.0, one level → {one_level:.4f} dB"

    def check_losses(self) -> Tuple[bool, str]:
        with precision("float64"):
            a = Tensor(self.rng.uniform(0, 1, (1, 3, 16, 16)))
            b = Tensor(self.rng.uniform(0, 1, (1, 3, 16, 16)))
            config = LossConfig()
            zero = total_loss(a, a, config).item()
            forward = total_loss(a, b, config).item()
            backward = total_loss(b, a, config).item()
        return zero == 0 and forward > 0 and forward == backward, f"loss(a,a)=0, loss(a,b)={forward:.6f}"

    def check_sampling(self) -> Tuple[bool, str]:
        fixed = {sample_qf(self.rng, QfMode.fixed(80)).value for _ in range(100)}
        degenerate = {sample_qf(self.rng, QfMode.random(10, 10)).value for _ in range(100)}
        spread = {sample_qf(self.rng, QfMode.random(10, 90)).value for _ in range(2000)}
        ok = fixed == {80} and degenerate == {10} and spread == set(range(10, 91))
        return ok, f"fixed {fixed}, degenerate {degenerate}, {len(spread)} distinct random values"

    def check_checkpoint(self) -> Tuple[bool, str]:
        config = TrainConfig(
            steps=0, crop=16, batch=1, model={"enhancer": {"width": 8, "num_rmrb": 1, "num_mrb_per_rmrb": 1}}
        )
        model = build_model(config)
        ckpt = Checkpoint(config=config, step=0, params=model.state_dict(), rng_state={"seed": 0})
        payload = ckpt.to_bytes()
        return Checkpoint.from_bytes(payload).to_bytes() == payload, f"{len(payload)} bytes survive a round trip"

    def run_all(self) -> bool:
        checks = [
            ("quantization tables", self.check_qm_tables),
            ("QF scale factors", self.check_scale),
            ("8×8 DCT integrity", self.check_dct),
            ("compression round trip", self.check_roundtrip),
            ("illumination prior, light-up, fuse", self.check_priors),
            ("identity contracts", self.check_identities),
            ("finite-difference gradients", self.check_gradients),
            ("PSNR and SSIM", self.check_metrics),
            ("training loss", self.check_losses),
            ("QF sampling", self.check_sampling),
            ("checkpoint round trip", self.check_checkpoint),
        ]
        for name, check in checks:
            self.run_check(name, check)
        self.echo(f"\n📊 {self.tests_passed}/{self.tests_run} checks passed")
        return self.tests_passed == self.tests_run


def run_selftest(echo: Callable[[str], None] = print, seed: int = 0) -> bool:
    return InvariantSuite(echo, seed).run_all()
