"""Prototype pulses, polyphase decomposition, transfer matrices, PR checks.

Pulses are real FIR filters of length N = 2*M*kappa.  All pulses produced
here are scaled so that sum(taps**2) == M; with that normalization the
filterbank noise power per subcarrier reduces to sigma2 * |W_m|**2.

The PHYDYAS pulse is the frequency-sampling design with overlapping factor
kappa = 4 and (centered) cosine-series coefficients 1, 0.97195983,
sqrt(2)/2, 0.23514695.  Table-style Fourier magnitudes are reported in the
unit-DC normalization, i.e. raw length-N DFT divided by 2M, where the DC
bin equals kappa.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, UnsupportedPulseError
from .numerics import UnitaryDft, folding_operators, row_convolve

PHYDYAS_COEFFS = (1.0, 0.97195983, np.sqrt(2.0) / 2.0, 0.23514695)


@dataclass(frozen=True)
class PrototypePulse:
    """Real prototype pulse of length N = 2*M*kappa.

    ``family`` records the analytic continuous-time form ("phydyas",
    "half-sine" or "external"); derivative pulses are only available for
    the analytic families.  ``scale`` is the factor applied to the
    canonical (unit-DC) sampling to reach the sum(p**2) == M normalization.
    """

    taps: np.ndarray
    half_m: int
    kappa: int
    label: str = ""
    family: str = "external"
    scale: float = 1.0

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=float)
        object.__setattr__(self, "taps", taps)
        if taps.ndim != 1 or taps.shape[0] != 2 * self.half_m * self.kappa:
            raise DimensionError(
                f"pulse length {taps.shape} does not match 2*M*kappa "
                f"= {2 * self.half_m * self.kappa}"
            )
        if not np.all(np.isfinite(taps)):
            raise ConfigError("pulse taps must be finite")

    @property
    def two_m(self) -> int:
        return 2 * self.half_m

    @property
    def length(self) -> int:
        return 2 * self.half_m * self.kappa

    def sample_times(self) -> np.ndarray:
        """Centered sampling grid (n - (N+1)/2) / (2M), n = 1..N."""
        n = np.arange(1, self.length + 1)
        return (n - (self.length + 1) / 2.0) / self.two_m


@dataclass(frozen=True)
class DerivativePulses:
    """Receive pulse and its first two scaled derivatives (equal length)."""

    d0: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    symbol_period: float = 1.0

    def __getitem__(self, r: int) -> np.ndarray:
        return (self.d0, self.d1, self.d2)[r]


@dataclass(frozen=True)
class PolyphaseMatrix:
    """Type-I polyphase components: row m holds taps[m], taps[m+2M], ..."""

    full: np.ndarray

    @property
    def top(self) -> np.ndarray:
        return self.full[: self.full.shape[0] // 2]

    @property
    def bottom(self) -> np.ndarray:
        return self.full[self.full.shape[0] // 2 :]


@dataclass(frozen=True)
class TransferMatrices:
    """R and S transfer matrices (2M x (2*kappa - 1)) and the S halves."""

    r: np.ndarray
    s: np.ndarray

    @property
    def s_top(self) -> np.ndarray:
        return self.s[: self.s.shape[0] // 2]

    @property
    def s_bottom(self) -> np.ndarray:
        return self.s[self.s.shape[0] // 2 :]


@dataclass(frozen=True)
class PrCheck:
    is_pr: bool
    residual_r: float
    residual_s: float


@dataclass(frozen=True)
class SpectrumProfile:
    """Conjugate-DFT spectrum of a real vector and its one-sided support m0."""

    rho: np.ndarray
    m0: int
    threshold: float


def _phydyas_canonical(half_m: int, derivative: int = 0) -> np.ndarray:
    """Centered PHYDYAS cosine series (unit DC) or its time derivatives."""
    kappa = 4
    n = np.arange(1, 2 * half_m * kappa + 1)
    t = (n - (2 * half_m * kappa + 1) / 2.0) / (2 * half_m)
    out = np.full(t.shape, 1.0 if derivative == 0 else 0.0)
    for k in (1, 2, 3):
        w = 2.0 * np.pi * k / kappa
        c = PHYDYAS_COEFFS[k]
        if derivative == 0:
            out = out + 2.0 * c * np.cos(w * t)
        elif derivative == 1:
            out = out - 2.0 * c * w * np.sin(w * t)
        else:
            out = out - 2.0 * c * w * w * np.cos(w * t)
    return out


def phydyas_pulse(half_m: int) -> PrototypePulse:
    """Frequency-sampling PHYDYAS pulse, kappa = 4, length 8M."""
    if half_m < 4:
        raise ConfigError(f"PHYDYAS pulse needs M >= 4, got {half_m}")
    canonical = _phydyas_canonical(half_m)
    scale = np.sqrt(half_m / np.sum(canonical**2))
    return PrototypePulse(
        taps=scale * canonical,
        half_m=half_m,
        kappa=4,
        label="phydyas",
        family="phydyas",
        scale=scale,
    )


def half_sine_pr_pulse(half_m: int) -> PrototypePulse:
    """Symmetric kappa = 1 pulse sin(pi*(2n-1)/(4M)); PR with itself."""
    if half_m < 2:
        raise ConfigError(f"half-sine pulse needs M >= 2, got {half_m}")
    n = np.arange(1, 2 * half_m + 1)
    taps = np.sin(np.pi * (2 * n - 1) / (4 * half_m))
    return PrototypePulse(
        taps=taps, half_m=half_m, kappa=1, label="half-sine",
        family="half-sine", scale=1.0,
    )


def derivative_pulses(
    pulse: PrototypePulse,
    d1: np.ndarray | None = None,
    d2: np.ndarray | None = None,
) -> DerivativePulses:
    """Analytic first/second derivative samplings of the continuous pulse.

    External pulses must supply d1 and d2 explicitly; finite differences
    are never substituted silently.
    """
    if d1 is not None and d2 is not None:
        d1 = np.asarray(d1, dtype=float)
        d2 = np.asarray(d2, dtype=float)
        if d1.shape != pulse.taps.shape or d2.shape != pulse.taps.shape:
            raise DimensionError("supplied derivative pulses have wrong length")
        return DerivativePulses(pulse.taps.copy(), d1, d2)
    if pulse.family == "phydyas":
        return DerivativePulses(
            pulse.taps.copy(),
            pulse.scale * _phydyas_canonical(pulse.half_m, 1),
            pulse.scale * _phydyas_canonical(pulse.half_m, 2),
        )
    if pulse.family == "half-sine":
        t = pulse.sample_times()
        return DerivativePulses(
            pulse.taps.copy(),
            -np.pi * np.sin(np.pi * t) * pulse.scale,
            -np.pi**2 * np.cos(np.pi * t) * pulse.scale,
        )
    raise UnsupportedPulseError(
        f"pulse {pulse.label!r} has no analytic form; supply d1 and d2"
    )


def polyphase(pulse: PrototypePulse) -> PolyphaseMatrix:
    """2M x kappa matrix of Type-I polyphase components."""
    return PolyphaseMatrix(polyphase_of(pulse.taps, pulse.two_m))


def polyphase_of(taps: np.ndarray, two_m: int) -> np.ndarray:
    taps = np.asarray(taps, dtype=float)
    if taps.shape[0] % two_m != 0:
        raise DimensionError("tap count is not a multiple of 2M")
    kappa = taps.shape[0] // two_m
    return taps.reshape(kappa, two_m).T.copy()


def pr_target(two_m: int, kappa: int) -> np.ndarray:
    """The 2M x (2*kappa - 1) matrix with an all-ones column at kappa."""
    target = np.zeros((two_m, 2 * kappa - 1))
    target[:, kappa - 1] = 1.0
    return target


def transfer_matrices(p: PrototypePulse, q_taps: np.ndarray) -> TransferMatrices:
    """R = [P1 (*) J_M Q2 ; P2 (*) J_M Q1], S = [P2 (*) J_M Q2 ; P1 (*) J_M Q1].

    (*) is row-wise convolution; J_M reverses the rows of each Q half.
    """
    q_taps = np.asarray(q_taps, dtype=float)
    if q_taps.shape != p.taps.shape:
        raise DimensionError(
            f"pulse lengths differ: {p.taps.shape[0]} vs {q_taps.shape[0]}"
        )
    pm = polyphase_of(p.taps, p.two_m)
    qm = polyphase_of(q_taps, p.two_m)
    half = p.half_m
    p1, p2 = pm[:half], pm[half:]
    q1, q2 = qm[:half], qm[half:]
    r = np.vstack([
        row_convolve(p1, np.flipud(q2)),
        row_convolve(p2, np.flipud(q1)),
    ])
    s = np.vstack([
        row_convolve(p2, np.flipud(q2)),
        row_convolve(p1, np.flipud(q1)),
    ])
    return TransferMatrices(r=r, s=s)


def check_pr(p: PrototypePulse, q: PrototypePulse, tol: float = 1e-12) -> PrCheck:
    """Residuals of the perfect-reconstruction constraints for a pulse pair."""
    tm = transfer_matrices(p, q.taps)
    u_plus, u_minus = folding_operators(p.two_m)
    res_r = float(np.max(np.abs(u_plus @ tm.r - pr_target(p.two_m, p.kappa))))
    res_s = float(np.max(np.abs(u_minus @ tm.s)))
    return PrCheck(is_pr=(res_r <= tol and res_s <= tol),
                   residual_r=res_r, residual_s=res_s)


def spectrum_profile(v: np.ndarray, threshold: float = 1e-6) -> SpectrumProfile:
    """Conjugate unitary DFT rho = F^H v and the one-sided support count m0.

    m0 is the smallest integer such that every bin farther than m0 from DC
    (in circular distance) is below threshold * |rho_1|.
    """
    v = np.asarray(v, dtype=float)
    two_m = v.shape[0]
    if two_m < 2 or not (0.0 < threshold < 1.0):
        raise DimensionError("need length >= 2 and threshold in (0, 1)")
    rho = UnitaryDft(two_m).inverse(v)
    ref = np.abs(rho[0])
    if ref == 0.0:
        ref = np.max(np.abs(rho))
    m0 = 0
    if ref > 0.0:
        for n in range(1, two_m):  # 0-based bin n == 1-based bin n+1
            if np.abs(rho[n]) >= threshold * ref:
                m0 = max(m0, min(n, two_m - n))
    return SpectrumProfile(rho=rho, m0=m0, threshold=threshold)


def paper_spectrum_magnitudes(pulse: PrototypePulse) -> np.ndarray:
    """Length-N DFT magnitudes of the canonical (unit-DC) pulse over 2M.

    In this normalization the PHYDYAS DC bin equals kappa and the next
    three bins are kappa times the cosine-series coefficients.
    """
    canonical = pulse.taps / pulse.scale
    return np.abs(np.fft.fft(canonical)) / pulse.two_m


def save_pulse(pulse: PrototypePulse, path: str) -> None:
    """Plain-text export: header line then one tap per line (17 sig digits)."""
    with open(path, "w") as fh:
        fh.write(f"# M={pulse.half_m} kappa={pulse.kappa} label={pulse.label}\n")
        for tap in pulse.taps:
            fh.write(f"{tap:.17g}\n")


def load_pulse(path: str) -> PrototypePulse:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ConfigError(f"{path}: missing pulse header line")
        fields = dict(
            item.split("=", 1) for item in header.lstrip("#").split() if "=" in item
        )
        try:
            half_m = int(fields["M"])
            kappa = int(fields["kappa"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{path}: bad pulse header {header!r}") from exc
        label = fields.get("label", "")
        taps = np.array([float(line) for line in fh if line.strip()])
    if taps.size == 0:
        raise ConfigError(f"{path}: pulse file contains no taps")
    return PrototypePulse(taps=taps, half_m=half_m, kappa=kappa, label=label,
                          family="external")
