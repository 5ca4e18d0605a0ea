"""Archive container and the encode/decode orchestration.

Container layout (all integers little-endian):

    magic            4s   b"NZ01"
    format version   u8
    mode             u8   0 bootstrap, 1 combined, 2 order0, 3 empty, 4 constant
    flags            u8   reserved, must be zero
    seed             u64
    length           u64  input size in bytes (== symbols)
    alphabet size    u16
    alphabet         <size> bytes, strictly ascending
    context K        u16
    stride m         u8
    parts            u16
    update interval  u16
    lr schedule id   u8
    scaled profile   u8
    input checksum   u64
    model blob len   u64
    model blob       <len> bytes
    payload bits     u64
    payload          ceil(bits / 8) bytes

Modes 2-4 are fallbacks: inputs no longer than the context window are
coded with an adaptive order-0 counts model (no neural net), single-byte
alphabets store nothing but the length, and empty input stores only a
header.  Modes 0 and 1 carry a trained predictor in the blob unless the
part layout leaves no modeled positions (every part fits inside the warm-up
window), in which case the blob is empty and both sides skip the model.

Symmetry contract: everything the decoder does -- model init, feature
extraction, probability quantization, adaptive updates -- replays the
encoder's arithmetic exactly, so any divergence is a bug, not a tolerance
question.  The optional trace hash digests every quantized cdf handed to
the coder (warm-up uniforms excluded, they are compile-time constants on
both sides) and gives tests a cheap way to pinpoint where a divergence
started.
"""

import dataclasses
import hashlib
import struct
import time

import numpy as np

from . import coder, core, models, nn, rng, trainer
from .errors import CorruptArchive, EmptyInput, UnsupportedVersion

MAGIC = b"NZ01"
FORMAT_VERSION = 1

MODE_BOOTSTRAP = 0
MODE_COMBINED = 1
MODE_ORDER0 = 2
MODE_EMPTY = 3
MODE_CONSTANT = 4

_MODE_IDS = {"bootstrap": MODE_BOOTSTRAP, "combined": MODE_COMBINED}
_DEFAULT_PARTS = {"bootstrap": 1024, "combined": 64}

# Fixed by the format: the decoder rebuilds the supporter optimiser from
# the header alone, so the adaptive-phase learning rate cannot vary per
# archive without a format bump.
ADAPTIVE_LR = 5e-4
ADAPTIVE_BETA1 = 0.0


@dataclasses.dataclass(frozen=True)
class ModeConfig:
    """Coding-side knobs; everything here is recorded in the header."""

    mode: str = "combined"
    parts: int = 0  # 0 picks the per-mode default
    update_interval: int = 20
    context: int = models.CONTEXT_DEFAULT
    stride: int = models.STRIDE_DEFAULT
    scaled: bool = False

    def __post_init__(self):
        if self.mode not in _MODE_IDS:
            raise ValueError(f"mode must be one of {sorted(_MODE_IDS)}")
        if not (0 <= self.parts <= 0xFFFF):
            raise ValueError("parts must fit in 16 bits")
        if not (1 <= self.update_interval <= 0xFFFF):
            raise ValueError("update_interval must be in 1..65535")
        if not (1 <= self.context <= 0xFFFF):
            raise ValueError("context must fit in 16 bits")
        if not (1 <= self.stride <= 0xFF):
            raise ValueError("stride must fit in 8 bits")
        if self.context % self.stride != 0:
            raise ValueError("context must be a multiple of stride")

    def resolved_parts(self) -> int:
        return self.parts if self.parts else _DEFAULT_PARTS[self.mode]


@dataclasses.dataclass
class Header:
    mode: int
    seed: int
    length: int
    alphabet: tuple[int, ...]  # byte values, ascending; empty for mode 3
    context: int
    stride: int
    parts: int
    update_interval: int
    schedule: int
    scaled: int
    checksum: int


class _TraceHash:
    """Running digest of the quantized cdfs consumed by the coder."""

    def __init__(self):
        self._h = hashlib.sha256()

    def update(self, cum: np.ndarray) -> None:
        self._h.update(np.ascontiguousarray(cum, dtype=np.int64).tobytes())

    def hexdigest(self) -> str:
        return self._h.hexdigest()


# ---------------------------------------------------------------------------
# header pack/parse


def _pack_archive(h: Header, blob: bytes, payload: bytes, payload_bits: int) -> bytes:
    pieces = [
        struct.pack("<4sBBB", MAGIC, FORMAT_VERSION, h.mode, 0),
        struct.pack("<QQH", h.seed, h.length, len(h.alphabet)),
        bytes(h.alphabet),
        struct.pack(
            "<HBHHBB",
            h.context,
            h.stride,
            h.parts,
            h.update_interval,
            h.schedule,
            h.scaled,
        ),
        struct.pack("<QQ", h.checksum, len(blob)),
        blob,
        struct.pack("<Q", payload_bits),
        payload,
    ]
    return b"".join(pieces)


def _take(buf: bytes, offset: int, count: int) -> tuple[bytes, int]:
    end = offset + count
    if end > len(buf):
        raise CorruptArchive("archive truncated")
    return buf[offset:end], end


def parse_archive(buf: bytes) -> tuple[Header, bytes, bytes, int]:
    """Split an archive into (header, model blob, payload, payload bits).

    Raises CorruptArchive on any structural inconsistency and
    UnsupportedVersion on a format version from the future.  Payload
    contents are NOT validated here; that is the checksum's job after
    decoding.
    """
    raw, off = _take(buf, 0, 7)
    magic, version, mode, flags = struct.unpack("<4sBBB", raw)
    if magic != MAGIC:
        raise CorruptArchive("bad magic")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"format version {version}")
    if mode > MODE_CONSTANT:
        raise CorruptArchive(f"unknown mode {mode}")
    if flags != 0:
        raise CorruptArchive("reserved flags set")
    raw, off = _take(buf, off, 18)
    seed, length, v = struct.unpack("<QQH", raw)
    alpha_raw, off = _take(buf, off, v)
    alphabet = tuple(alpha_raw)
    if v > 256 or any(a >= b for a, b in zip(alphabet, alphabet[1:])):
        raise CorruptArchive("alphabet not strictly ascending")
    raw, off = _take(buf, off, 9)
    context, stride, parts, update_interval, schedule, scaled = struct.unpack(
        "<HBHHBB", raw
    )
    raw, off = _take(buf, off, 16)
    checksum, blob_len = struct.unpack("<QQ", raw)
    blob, off = _take(buf, off, blob_len)
    raw, off = _take(buf, off, 8)
    (payload_bits,) = struct.unpack("<Q", raw)
    payload, off = _take(buf, off, (payload_bits + 7) // 8)
    if off != len(buf):
        raise CorruptArchive("trailing bytes after payload")

    if mode == MODE_EMPTY:
        if length or v or blob_len or payload_bits:
            raise CorruptArchive("empty mode with non-empty fields")
    elif mode == MODE_CONSTANT:
        if v != 1 or length == 0 or blob_len or payload_bits:
            raise CorruptArchive("constant mode malformed")
    else:
        if v < 2 or length == 0:
            raise CorruptArchive("coded mode needs data and two symbols")
        if scaled > 1:
            raise CorruptArchive("scaled flag out of range")
        if mode in (MODE_BOOTSTRAP, MODE_COMBINED):
            if context < 1 or stride < 1 or context % stride:
                raise CorruptArchive("context/stride malformed")
            if parts < 1 or update_interval < 1:
                raise CorruptArchive("parts/update_interval malformed")
    header = Header(
        mode=mode,
        seed=seed,
        length=length,
        alphabet=alphabet,
        context=context,
        stride=stride,
        parts=parts,
        update_interval=update_interval,
        schedule=schedule,
        scaled=scaled,
        checksum=checksum,
    )
    return header, blob, payload, payload_bits


# ---------------------------------------------------------------------------
# model blob


def serialize_model(store: nn.ParameterStore) -> bytes:
    """Flatten parameters to float32 and squeeze them through an adaptive
    order-0 byte coder.  Float bytes are nearly incompressible apart from
    exponent regularities, so expect only a modest saving; the point is that
    the blob shares the coder machinery rather than needing a second codec.
    """
    raw = store.to_vector().astype("<f4").tobytes()
    model = coder.AdaptiveCountsModel(256)
    enc = coder.Encoder()
    for byte in raw:
        enc.encode_symbol(model.cdf(), byte)
        model.update(byte)
    coded = enc.finish()
    return struct.pack("<QQ", len(raw), enc.bit_count) + coded


def deserialize_model(
    blob: bytes, config: models.BootstrapConfig
) -> models.BootstrapModel:
    prefix, off = _take(blob, 0, 16)
    raw_len, bit_count = struct.unpack("<QQ", prefix)
    coded, off = _take(blob, off, (bit_count + 7) // 8)
    if off != len(blob):
        raise CorruptArchive("model blob has trailing bytes")
    model = models.BootstrapModel(config, seed=0)
    if raw_len != 4 * model.store.param_count():
        raise CorruptArchive("model blob does not match the architecture")
    counts = coder.AdaptiveCountsModel(256)
    dec = coder.Decoder(coded, bit_count)
    out = bytearray(raw_len)
    for i in range(raw_len):
        byte = dec.decode_symbol(counts.cdf())
        counts.update(byte)
        out[i] = byte
    vec = np.frombuffer(bytes(out), dtype="<f4")
    if not np.all(np.isfinite(vec)):
        raise CorruptArchive("model blob decodes to non-finite weights")
    model.store.from_vector(vec.astype(np.float32))
    return model


# ---------------------------------------------------------------------------
# coding phases (shared by encoder and decoder; `decode` flips direction)


def _code_order0(engine, symbols: np.ndarray, v: int, decode: bool, trace) -> None:
    model = coder.AdaptiveCountsModel(v)
    n = symbols.shape[0]
    for i in range(n):
        cdf = model.cdf()
        if trace is not None:
            trace.update(cdf.cum)
        if decode:
            symbols[i] = engine.decode_symbol(cdf)
        else:
            engine.encode_symbol(cdf, int(symbols[i]))
        model.update(int(symbols[i]))


def _code_warmup(
    engine, symbols: np.ndarray, layout: core.PartLayout, v: int, k: int, decode: bool
) -> None:
    """First min(K, part length) symbols of every part, uniformly coded."""
    cdf = coder.uniform_cdf(v)
    bounds = layout.boundaries
    for p in range(layout.num_parts):
        start = bounds[p]
        stop = min(bounds[p] + k, bounds[p + 1])
        for i in range(start, stop):
            if decode:
                symbols[i] = engine.decode_symbol(cdf)
            else:
                engine.encode_symbol(cdf, int(symbols[i]))


def _code_modeled(
    engine,
    symbols: np.ndarray,
    layout: core.PartLayout,
    boot: models.BootstrapModel,
    sup: models.SupporterModel | None,
    update_interval: int,
    decode: bool,
    trace,
) -> None:
    """Step-major lockstep pass over every position past the warm-up.

    At step i the active parts are those longer than i; part sizes are
    non-increasing, so the active set is always a prefix and contexts can
    be gathered with one fancy index.  In combined mode the supporter and
    the mixing weight take one averaged Adam step per `update_interval`
    steps, after the interval's symbols are coded, on both sides alike.
    """
    k = boot.cfg.K
    v = boot.cfg.V
    sizes = np.asarray(layout.part_sizes(), dtype=np.int64)
    starts = np.asarray(layout.boundaries[:-1], dtype=np.int64)
    max_size = layout.max_size()
    total_steps = max_size - k
    if sup is not None:
        opt = nn.AdamConfig(
            lr=ADAPTIVE_LR, beta1=ADAPTIVE_BETA1, beta2=0.999, clip_norm=1.0
        )
    span = np.arange(k, dtype=np.int64)
    for j in range(total_steps):
        step = k + j
        count = int(np.count_nonzero(sizes > step))
        base = starts[:count]
        contexts = symbols[base[:, None] + (step - k) + span[None, :]]
        with nn.no_grad():
            logits_b, taps = boot.logits(contexts)
        if sup is None:
            mix = None
            probs = nn.softmax_batch(logits_b.data)
        else:
            if j % update_interval == 0:
                sup.store.zero_grads()
            feats = nn.Tensor(taps.data)  # frozen bootstrap: plain leaf
            logits_s = sup.logits(feats)
            mix = models.combine(nn.Tensor(logits_b.data), logits_s, sup.theta)
            probs = nn.softmax_batch(mix.logits_c.data)
        masses = coder.quantize_batch(probs)
        cums = np.zeros((count, v + 1), dtype=np.int64)
        np.cumsum(masses, axis=1, out=cums[:, 1:])
        if trace is not None:
            trace.update(cums)
        targets_at = base + step
        if decode:
            for r in range(count):
                symbols[targets_at[r]] = engine.decode_symbol(cums[r])
        else:
            for r in range(count):
                engine.encode_symbol(cums[r], int(symbols[targets_at[r]]))
        if sup is not None:
            # Interval length shrinks at the tail; grads average over the
            # interval's steps so the tail is not overweighted.
            interval_len = min(update_interval, total_steps - (j - j % update_interval))
            loss = models.combined_loss(mix, symbols[targets_at])
            nn.backward(loss, seed=1.0 / interval_len)
            if j % update_interval == interval_len - 1:
                nn.clip_gradients(sup.store, opt.clip_norm)
                nn.adam_step(sup.store, opt)


# ---------------------------------------------------------------------------
# public entry points


def compress(
    data: bytes,
    mode: ModeConfig | None = None,
    plan: trainer.TrainPlan | None = None,
    seed: int = 0,
    trace=None,
    log_fn=None,
    timings: dict | None = None,
) -> bytes:
    """Compress `data` into a self-contained archive.

    `seed` pins every pseudorandom choice (weight init, shuffles, the
    supporter); identical data+flags+seed gives a byte-identical archive.
    `plan` only shapes bootstrap training and is recorded for provenance;
    decoding never needs it.  `timings`, when given, receives the wall
    seconds spent in training under the "train" key.
    """
    mode = mode if mode is not None else ModeConfig()
    plan = plan if plan is not None else trainer.TrainPlan()
    if not (0 <= seed < 1 << 64):
        raise ValueError("seed must fit in 64 bits")
    if plan.seed != seed:
        plan = dataclasses.replace(plan, seed=seed)

    base = Header(
        mode=_MODE_IDS[mode.mode],
        seed=seed,
        length=len(data),
        alphabet=(),
        context=mode.context,
        stride=mode.stride,
        parts=mode.resolved_parts(),
        update_interval=mode.update_interval,
        schedule=plan.schedule,
        scaled=int(mode.scaled),
        checksum=rng.checksum(data),
    )
    if len(data) == 0:
        base.mode = MODE_EMPTY
        return _pack_archive(base, b"", b"", 0)

    alphabet = core.detect_alphabet(data)
    base.alphabet = tuple(alphabet.index_to_byte)
    if alphabet.size == 1:
        base.mode = MODE_CONSTANT
        return _pack_archive(base, b"", b"", 0)

    stream = core.map_symbols(data, alphabet)
    symbols = stream.symbols
    v = alphabet.size
    enc = coder.Encoder()

    if stream.length <= mode.context:
        base.mode = MODE_ORDER0
        _code_order0(enc, symbols, v, decode=False, trace=trace)
        payload = enc.finish()
        return _pack_archive(base, b"", payload, enc.bit_count)

    layout = core.split_parts(stream.length, base.parts)
    blob = b""
    boot = None
    sup = None
    if layout.max_size() > mode.context:
        boot_cfg, sup_cfg = models.select_configs(
            v, mode.context, mode.stride, mode.scaled
        )
        t0 = time.monotonic()
        boot, _log = trainer.train_bootstrap(stream, boot_cfg, plan, log_fn=log_fn)
        if timings is not None:
            timings["train"] = time.monotonic() - t0
        blob = serialize_model(boot.store)
        if base.mode == MODE_COMBINED:
            sup = models.SupporterModel(sup_cfg, rng.derive_seed(seed, "supporter"))
    _code_warmup(enc, symbols, layout, v, mode.context, decode=False)
    if boot is not None:
        _code_modeled(
            enc,
            symbols,
            layout,
            boot,
            sup,
            mode.update_interval,
            decode=False,
            trace=trace,
        )
    payload = enc.finish()
    return _pack_archive(base, blob, payload, enc.bit_count)


def decompress(archive: bytes, trace=None) -> bytes:
    header, blob, payload, payload_bits = parse_archive(archive)
    if header.mode == MODE_EMPTY:
        out = b""
        if rng.checksum(out) != header.checksum:
            raise CorruptArchive("checksum mismatch")
        return out
    alphabet = core.Alphabet(header.alphabet)
    if header.mode == MODE_CONSTANT:
        out = bytes([header.alphabet[0]]) * header.length
        if rng.checksum(out) != header.checksum:
            raise CorruptArchive("checksum mismatch")
        return out

    v = alphabet.size
    symbols = np.zeros(header.length, dtype=np.int32)
    dec = coder.Decoder(payload, payload_bits)
    if header.mode == MODE_ORDER0:
        if header.length > header.context:
            raise CorruptArchive("order0 stream longer than the context window")
        _code_order0(dec, symbols, v, decode=True, trace=trace)
    else:
        layout = core.split_parts(header.length, header.parts)
        modeled = layout.max_size() > header.context
        if modeled != bool(blob):
            raise CorruptArchive("model blob does not match the part layout")
        boot = None
        sup = None
        if modeled:
            boot_cfg, sup_cfg = models.select_configs(
                v, header.context, header.stride, bool(header.scaled)
            )
            boot = deserialize_model(blob, boot_cfg)
            if header.mode == MODE_COMBINED:
                sup = models.SupporterModel(
                    sup_cfg, rng.derive_seed(header.seed, "supporter")
                )
        _code_warmup(dec, symbols, layout, v, header.context, decode=True)
        if boot is not None:
            _code_modeled(
                dec,
                symbols,
                layout,
                boot,
                sup,
                header.update_interval,
                decode=True,
                trace=trace,
            )
    out = core.unmap_symbols(symbols, alphabet)
    if rng.checksum(out) != header.checksum:
        raise CorruptArchive("checksum mismatch")
    return out


def compress_with_trace(
    data: bytes,
    mode: ModeConfig | None = None,
    plan: trainer.TrainPlan | None = None,
    seed: int = 0,
) -> tuple[bytes, str]:
    trace = _TraceHash()
    archive = compress(data, mode=mode, plan=plan, seed=seed, trace=trace)
    return archive, trace.hexdigest()


def decompress_with_trace(archive: bytes) -> tuple[bytes, str]:
    trace = _TraceHash()
    out = decompress(archive, trace=trace)
    return out, trace.hexdigest()


def report_bpc(archive: bytes, n: int | None = None) -> tuple[float, float]:
    """(bits per input byte, model share of the coded bits).

    `n` defaults to the original length recorded in the archive.  bpc
    counts the whole archive -- header included -- because that is what you
    pay to store the file.  The share splits only blob vs payload; an
    archive with no coded content reports 0.
    """
    header, blob, _payload, payload_bits = parse_archive(archive)
    if n is None:
        n = header.length
    bpc = 8.0 * len(archive) / n if n else 0.0
    model_bits = 8 * len(blob)
    denom = model_bits + payload_bits
    share = model_bits / denom if denom else 0.0
    return bpc, share
