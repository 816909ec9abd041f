"""FBMC/OQAM transmultiplexer: staggering, synthesis, analysis, de-staggering.

Column convention (1-based): with overlapping factor kappa, the transmitted
symbol n is read at column n + kappa - 1 of the odd output grid and column
n + kappa of the even grid (``destagger`` does exactly that).  Both grids
have N_s + 2*kappa - 1 columns; the leading/trailing columns are filter
transients.  ``ideal_output`` evaluates the polyphase matrix model of the
ideal-channel transmultiplexer directly and is the oracle the time-domain
``analyze(synthesize(...))`` cascade must reproduce.

Scaling: synthesis multiplies the sqrt(2M)-scaled IDFT blocks by sqrt(2)/
sqrt(2M) net (see below) so that, with pulses normalized to sum(q**2) == M,
white noise of variance sigma2 at the stream maps to de-staggered noise of
variance sigma2 * |W_m|**2 per complex symbol.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .numerics import SeededRng, UnitaryDft, phase_diagonal
from .pulses import PrototypePulse, polyphase_of, transfer_matrices


@dataclass(frozen=True)
class SymbolGrid:
    """Real/imaginary OQAM symbol planes (2M x N_s) plus allocation info."""

    re: np.ndarray
    im: np.ndarray
    allocation: tuple
    power: float

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise DimensionError("re/im planes differ in shape")

    @property
    def two_m(self) -> int:
        return self.re.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.re.shape[1]

    @property
    def complex_symbols(self) -> np.ndarray:
        return self.re + 1j * self.im


@dataclass(frozen=True)
class FilterbankOutput:
    """Odd/even analysis grids, each 2M x (N_s + 2*kappa - 1)."""

    odd: np.ndarray
    even: np.ndarray
    kappa: int

    def __post_init__(self):
        if self.odd.shape != self.even.shape:
            raise DimensionError("odd/even grids differ in shape")

    @property
    def column_origin(self) -> int:
        """Symbol n sits at odd column n + column_origin (1-based)."""
        return self.kappa - 1

    @property
    def n_symbols(self) -> int:
        return self.odd.shape[1] - 2 * self.kappa + 1


@dataclass(frozen=True)
class SampleStream:
    """Complex baseband samples at 2M per multicarrier symbol period."""

    samples: np.ndarray
    two_m: int
    kappa: int
    n_symbols: int


def qam_axis_levels(order: int, power: float) -> np.ndarray:
    """Per-axis PAM levels of a square QAM constellation with mean power P."""
    side = int(round(np.sqrt(order)))
    if side * side != order:
        raise ConfigError(f"constellation order {order} is not a square QAM")
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    return levels * np.sqrt(3.0 * power / (2.0 * (order - 1)))


def random_grid(
    allocation,
    power: float,
    n_symbols: int,
    two_m: int,
    constellation: int = 4,
    rng: SeededRng | np.random.Generator | None = None,
) -> SymbolGrid:
    """I.i.d. uniform QAM symbols on the allocated rows, zeros elsewhere."""
    allocation = tuple(sorted(set(int(a) for a in allocation)))
    if not allocation:
        raise ConfigError("empty allocation")
    if allocation[0] < 1 or allocation[-1] > two_m:
        raise ConfigError(f"allocation outside 1..{two_m}")
    gen = rng.generator() if isinstance(rng, SeededRng) else rng
    if gen is None:
        gen = np.random.default_rng()
    levels = qam_axis_levels(constellation, power)
    rows = np.asarray(allocation) - 1
    re = np.zeros((two_m, n_symbols))
    im = np.zeros((two_m, n_symbols))
    re[rows] = gen.choice(levels, size=(rows.size, n_symbols))
    im[rows] = gen.choice(levels, size=(rows.size, n_symbols))
    return SymbolGrid(re=re, im=im, allocation=allocation, power=power)


def synthesize(grid: SymbolGrid, p: PrototypePulse) -> SampleStream:
    """OQAM polyphase synthesis of a symbol grid.

    Real parts modulate the pulse on the symbol grid, imaginary parts (times
    j) on the grid offset by half a period (M samples); each block is the
    phase-rotated sqrt(2M)-scaled IDFT of the symbol column tiled across the
    pulse, scaled by sqrt(2).
    """
    two_m = p.two_m
    if grid.two_m != two_m:
        raise DimensionError(
            f"grid has {grid.two_m} subcarriers, pulse expects {two_m}"
        )
    half = p.half_m
    n_len = p.length
    n_s = grid.n_symbols
    dft = UnitaryDft(two_m)
    phi_conj = np.conj(phase_diagonal(two_m))
    vb = dft.forward(phi_conj[:, None] * grid.re)
    vc = dft.forward(phi_conj[:, None] * (1j * grid.im))
    out = np.zeros(2 * half * n_s + n_len - half, dtype=complex)
    scale = np.sqrt(2.0)
    for n0 in range(n_s):
        start = two_m * n0
        out[start : start + n_len] += scale * np.tile(vb[:, n0], p.kappa) * p.taps
        start += half
        out[start : start + n_len] += scale * np.tile(vc[:, n0], p.kappa) * p.taps
    return SampleStream(samples=out, two_m=two_m, kappa=p.kappa, n_symbols=n_s)


def analyze(
    stream: SampleStream | np.ndarray,
    q_taps: np.ndarray,
    half_m: int,
    kappa: int,
    n_symbols: int | None = None,
) -> FilterbankOutput:
    """Polyphase analysis filterbank producing the odd/even output grids.

    The filters convolve with the receive pulse (polyphase components of the
    time-reversed taps); outputs are produced every M samples and routed
    alternately to the odd and even grids.
    """
    samples = stream.samples if isinstance(stream, SampleStream) else np.asarray(stream)
    q_taps = np.asarray(q_taps, dtype=float)
    two_m = 2 * half_m
    n_len = q_taps.shape[0]
    if n_len != two_m * kappa:
        raise DimensionError("receive pulse length does not match 2*M*kappa")
    if n_symbols is None:
        if isinstance(stream, SampleStream):
            n_symbols = stream.n_symbols
        else:
            n_symbols = int(np.ceil((samples.shape[0] + half_m - n_len) / two_m))
    if n_symbols < 1 or samples.shape[0] < half_m:
        raise DimensionError("stream too short to analyze")
    width = n_symbols + 2 * kappa - 1
    q_rev = polyphase_of(q_taps[::-1].copy(), two_m)

    pad_left = (2 * kappa - 1) * half_m
    total = pad_left + two_m * (n_symbols + 2 * kappa - 1)
    padded = np.zeros(total, dtype=complex)
    usable = min(samples.shape[0], total - pad_left)
    padded[pad_left : pad_left + usable] = samples[:usable]

    dft = UnitaryDft(two_m)
    phi = phase_diagonal(two_m)
    odd = np.zeros((two_m, width), dtype=complex)
    even = np.zeros((two_m, width), dtype=complex)
    scale = np.sqrt(2.0)
    # Half-instants t (1-based) from 2 - 2*kappa to 2*n_symbols + 2*kappa - 1.
    for t in range(2 - 2 * kappa, 2 * n_symbols + 2 * kappa):
        base = pad_left + (t - 1) * half_m
        window = padded[base : base + n_len].reshape(kappa, two_m).T
        folded = np.sum(window * q_rev, axis=1)
        col = scale * phi * dft.inverse(folded)
        if t % 2:
            odd[:, (t + 2 * kappa - 3) // 2] = col
        else:
            even[:, (t + 2 * kappa - 2) // 2] = col
    return FilterbankOutput(odd=odd, even=even, kappa=kappa)


def _swap_halves(v: np.ndarray) -> np.ndarray:
    half = v.shape[0] // 2
    return np.concatenate([v[half:], v[:half]])


def ideal_output(
    grid: SymbolGrid, p: PrototypePulse, q_taps: np.ndarray
) -> FilterbankOutput:
    """Matrix-form ideal-channel transmultiplexer output.

    Evaluates, column by column, the row-convolution model built from the
    transfer matrices R and S: the odd grid column c collects
    M(b_i) R[:, c-i+1] plus the half-shifted S-stack driven by j*c_i, the
    even grid the same with the roles of the two symbol planes exchanged
    and the R block delayed by one column.
    """
    two_m = p.two_m
    if grid.two_m != two_m:
        raise DimensionError("grid/pulse subcarrier mismatch")
    if np.asarray(q_taps).shape != p.taps.shape:
        raise DimensionError("transmit/receive pulse length mismatch")
    kappa = p.kappa
    half = p.half_m
    n_s = grid.n_symbols
    width = n_s + 2 * kappa - 1
    tm = transfer_matrices(p, q_taps)

    # 2M x 2*kappa padded blocks: R in the odd branch occupies lags
    # 0..2k-2, in the even branch lags 1..2k-1; the S stack pairs the top
    # half at lag d-1 with the bottom half at lag d.
    r_odd = np.zeros((two_m, 2 * kappa))
    r_odd[:, : 2 * kappa - 1] = tm.r
    r_even = np.zeros((two_m, 2 * kappa))
    r_even[:, 1:] = tm.r
    s_stack = np.zeros((two_m, 2 * kappa))
    s_stack[:half, 1:] = tm.s_top
    s_stack[half:, : 2 * kappa - 1] = tm.s_bottom

    dft = UnitaryDft(two_m)
    phi = phase_diagonal(two_m)
    phi_conj = np.conj(phi)
    vb = dft.forward(phi_conj[:, None] * grid.re)
    vc = dft.forward(phi_conj[:, None] * (1j * grid.im))

    odd = np.zeros((two_m, width), dtype=complex)
    even = np.zeros((two_m, width), dtype=complex)
    for n0 in range(n_s):
        vb_n = vb[:, n0]
        vc_n = vc[:, n0]
        odd_block = dft.inverse(vb_n[:, None] * r_odd
                                + _swap_halves(vc_n)[:, None] * s_stack)
        even_block = dft.inverse(vc_n[:, None] * r_even
                                 + _swap_halves(vb_n)[:, None] * s_stack)
        odd[:, n0 : n0 + 2 * kappa] += 2.0 * phi[:, None] * odd_block
        even[:, n0 : n0 + 2 * kappa] += 2.0 * phi[:, None] * even_block
    return FilterbankOutput(odd=odd, even=even, kappa=kappa)


def destagger(out: FilterbankOutput) -> np.ndarray:
    """Recover complex symbols: Re(odd at n+k-1) + j*Im(even at n+k)."""
    kappa = out.kappa
    n_s = out.n_symbols
    odd_cols = out.odd[:, kappa - 1 : kappa - 1 + n_s]
    even_cols = out.even[:, kappa : kappa + n_s]
    return np.real(odd_cols) + 1j * np.imag(even_cols)


def apply_equalizer(out: FilterbankOutput, w: np.ndarray) -> FilterbankOutput:
    """Multiply row m of both grids by the per-subcarrier tap W_m."""
    w = np.asarray(w)
    if w.shape != (out.odd.shape[0],):
        raise DimensionError("equalizer length does not match subcarrier count")
    return FilterbankOutput(
        odd=w[:, None] * out.odd, even=w[:, None] * out.even, kappa=out.kappa
    )


def mix_streams(streams) -> SampleStream:
    """Sum per-user streams, zero-padding to the longest one."""
    streams = list(streams)
    if not streams:
        raise ConfigError("no streams to mix")
    length = max(s.samples.shape[0] for s in streams)
    acc = np.zeros(length, dtype=complex)
    for s in streams:
        acc[: s.samples.shape[0]] += s.samples
    first = streams[0]
    return SampleStream(samples=acc, two_m=first.two_m, kappa=first.kappa,
                        n_symbols=max(s.n_symbols for s in streams))


_HEADER_LEN = 32


def save_stream(stream: SampleStream, path: str) -> None:
    """Binary export: 32-byte text header then little-endian (re, im) doubles."""
    header = f"2M={stream.two_m:7d} K={stream.kappa:3d} NS={stream.n_symbols:9d}"
    header = header.ljust(_HEADER_LEN)[:_HEADER_LEN].encode("ascii")
    interleaved = np.empty(2 * stream.samples.shape[0], dtype="<f8")
    interleaved[0::2] = np.real(stream.samples)
    interleaved[1::2] = np.imag(stream.samples)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(interleaved.tobytes())


def load_stream(path: str) -> SampleStream:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER_LEN).decode("ascii")
        raw = np.frombuffer(fh.read(), dtype="<f8")
    try:
        fields = dict(item.split("=") for item in header.split())
        two_m, kappa, n_s = int(fields["2M"]), int(fields["K"]), int(fields["NS"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: bad stream header {header!r}") from exc
    samples = raw[0::2] + 1j * raw[1::2]
    return SampleStream(samples=samples, two_m=two_m, kappa=kappa, n_symbols=n_s)
