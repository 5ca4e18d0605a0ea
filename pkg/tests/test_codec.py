"""Archive container and end-to-end codec tests.

The expensive statistical checks (entropy approach, large corpora) live in
test_acceptance; here we cover the container format, every fallback mode,
corruption handling, and small modeled round trips in both modes.  Modeled
cases use a shortened context window so the neural path runs in seconds.
"""

import struct

import numpy as np
import pytest

from nzip import codec, coder, models, rng, trainer
from nzip.errors import CorruptArchive, UnsupportedVersion

# Small-window profile: keeps part lengths past the warm-up threshold at
# tiny input sizes, so the modeled phase actually executes.
TINY_MODE = dict(context=16, stride=4, scaled=True)
FAST_PLAN = trainer.TrainPlan(epochs=1, batch_size=256)


def small_combined(parts=4):
    return codec.ModeConfig(mode="combined", parts=parts, **TINY_MODE)


def small_bootstrap(parts=4):
    return codec.ModeConfig(mode="bootstrap", parts=parts, **TINY_MODE)


def roundtrip(data, mode, plan=FAST_PLAN, seed=1):
    arc, h_enc = codec.compress_with_trace(data, mode, plan=plan, seed=seed)
    out, h_dec = codec.decompress_with_trace(arc)
    assert out == data
    assert h_enc == h_dec
    return arc


class TestFallbackModes:
    def test_empty_input(self):
        arc = codec.compress(b"", seed=3)
        assert codec.decompress(arc) == b""
        # header-only: fixed fields sum to 58 bytes, nothing else
        assert len(arc) == 58

    def test_constant_run_small_archive(self):
        arc = codec.compress(b"\x07" * 10**6, seed=0)
        assert codec.decompress(arc) == b"\x07" * 10**6
        assert len(arc) <= 64

    def test_constant_any_byte(self):
        for b in (0, 0x41, 255):
            data = bytes([b]) * 37
            assert codec.decompress(codec.compress(data, seed=1)) == data

    def test_short_input_order0(self):
        # anything not longer than the context window skips the nets
        data = b"abracadabra"
        arc = roundtrip(data, codec.ModeConfig(mode="combined"))
        header, blob, _, bits = codec.parse_archive(arc)
        assert header.mode == codec.MODE_ORDER0
        assert blob == b"" and bits > 0

    def test_order0_boundary_at_context(self):
        mode = codec.ModeConfig(mode="combined", context=16, stride=4)
        exactly_k = bytes(range(16))
        over_k = bytes(range(17))
        h1, _, _, _ = codec.parse_archive(codec.compress(exactly_k, mode, seed=1))
        h2, _, _, _ = codec.parse_archive(codec.compress(over_k, mode, seed=1))
        assert h1.mode == codec.MODE_ORDER0
        assert h2.mode == codec.MODE_COMBINED

    def test_warmup_only_when_parts_fit_in_window(self):
        # 65 symbols over 64 parts: every part shorter than K, no model
        data = bytes(np.arange(65, dtype=np.uint8) % 7 + 48)
        arc = roundtrip(data, codec.ModeConfig(mode="combined"))
        header, blob, _, _ = codec.parse_archive(arc)
        assert header.mode == codec.MODE_COMBINED
        assert blob == b""


class TestModeledRoundTrips:
    def test_combined_mode(self):
        r = np.random.default_rng(11)
        data = bytes((r.random(1200) < 0.5).astype(np.uint8) + 48)
        arc = roundtrip(data, small_combined())
        header, blob, _, _ = codec.parse_archive(arc)
        assert header.mode == codec.MODE_COMBINED
        assert len(blob) > 0

    def test_bootstrap_mode(self):
        r = np.random.default_rng(12)
        data = bytes(r.integers(97, 101, 1200, dtype=np.uint8))
        arc = roundtrip(data, small_bootstrap())
        header, blob, _, _ = codec.parse_archive(arc)
        assert header.mode == codec.MODE_BOOTSTRAP
        assert len(blob) > 0

    def test_structured_input_beats_uniform_payload(self):
        # a learnable pattern should code well below 1 bit/symbol in the
        # payload once training has enough steps; the blob still dominates
        # total size at this scale
        data = b"ab" * 600
        plan = trainer.TrainPlan(epochs=6, batch_size=64)
        arc = roundtrip(data, small_combined(), plan=plan)
        header, blob, payload, bits = codec.parse_archive(arc)
        modeled = 1200 - 4 * 16  # positions past each part's warm-up
        assert bits < 0.7 * modeled + 33

    def test_wide_alphabet(self):
        r = np.random.default_rng(13)
        data = bytes(r.integers(0, 256, 900, dtype=np.uint8))
        roundtrip(data, small_combined())

    def test_interval_tail_shorter_than_update_interval(self):
        # part length 300 - K=16 = 284 modeled steps; interval 20 leaves a
        # 4-step tail, exercising the shrunken-interval averaging
        r = np.random.default_rng(14)
        data = bytes((r.random(1200) < 0.3).astype(np.uint8) + 65)
        roundtrip(data, small_combined(parts=4))


class TestDeterminism:
    def test_same_seed_identical_archive(self):
        r = np.random.default_rng(15)
        data = bytes((r.random(1200) < 0.5).astype(np.uint8) + 48)
        a1 = codec.compress(data, small_combined(), plan=FAST_PLAN, seed=42)
        a2 = codec.compress(data, small_combined(), plan=FAST_PLAN, seed=42)
        assert a1 == a2

    def test_different_seed_different_archive(self):
        data = b"the quick brown fox " * 60
        a1 = codec.compress(data, small_combined(), plan=FAST_PLAN, seed=1)
        a2 = codec.compress(data, small_combined(), plan=FAST_PLAN, seed=2)
        assert a1 != a2

    def test_seed_recorded_in_header(self):
        arc = codec.compress(b"xyz", seed=123456789)
        header, _, _, _ = codec.parse_archive(arc)
        assert header.seed == 123456789


class TestCorruption:
    def setup_method(self):
        r = np.random.default_rng(16)
        self.data = bytes((r.random(1200) < 0.5).astype(np.uint8) + 48)
        self.arc = codec.compress(self.data, small_combined(), plan=FAST_PLAN, seed=5)

    def test_bad_magic(self):
        with pytest.raises(CorruptArchive):
            codec.decompress(b"XXXX" + self.arc[4:])

    def test_future_version(self):
        bad = bytearray(self.arc)
        bad[4] = 9
        with pytest.raises(UnsupportedVersion):
            codec.decompress(bytes(bad))

    def test_reserved_flags(self):
        bad = bytearray(self.arc)
        bad[6] = 1
        with pytest.raises(CorruptArchive):
            codec.decompress(bytes(bad))

    def test_unknown_mode(self):
        bad = bytearray(self.arc)
        bad[5] = 7
        with pytest.raises(CorruptArchive):
            codec.decompress(bytes(bad))

    def test_truncation_everywhere(self):
        # chop at a spread of prefixes: every one must fail loudly, never
        # return wrong bytes
        for cut in [0, 3, 6, 20, 30, len(self.arc) // 2, len(self.arc) - 1]:
            with pytest.raises(CorruptArchive):
                codec.decompress(self.arc[:cut])

    def test_trailing_garbage(self):
        with pytest.raises(CorruptArchive):
            codec.decompress(self.arc + b"\x00")

    def test_payload_bit_flips(self):
        header, blob, payload, bits = codec.parse_archive(self.arc)
        payload_start = len(self.arc) - len(payload)
        # flip bits in the first half of the payload: those are always
        # consumed by the decoder, so the symbol stream must diverge and
        # the checksum must catch it
        for bit in [0, 7, 64, 4 * len(payload)]:
            bad = bytearray(self.arc)
            bad[payload_start + bit // 8] ^= 1 << (7 - bit % 8)
            with pytest.raises(CorruptArchive):
                codec.decompress(bytes(bad))

    def test_model_blob_corruption(self):
        header, blob, payload, bits = codec.parse_archive(self.arc)
        blob_start = self.arc.index(blob)
        bad = bytearray(self.arc)
        bad[blob_start + len(blob) // 2] ^= 0xFF
        with pytest.raises(CorruptArchive):
            codec.decompress(bytes(bad))

    def test_length_field_tamper(self):
        bad = bytearray(self.arc)
        n = struct.unpack_from("<Q", bad, 15)[0]
        struct.pack_into("<Q", bad, 15, n - 1)
        with pytest.raises(CorruptArchive):
            codec.decompress(bytes(bad))

    def test_alphabet_not_ascending(self):
        arc = codec.compress(b"ba" * 40, seed=1)  # order0, alphabet {a, b}
        bad = bytearray(arc)
        # alphabet bytes sit right after the fixed 25-byte prefix
        bad[25], bad[26] = bad[26], bad[25]
        with pytest.raises(CorruptArchive):
            codec.decompress(bytes(bad))


class TestModelBlob:
    def test_serialize_roundtrip_bitwise(self):
        cfg, _ = models.select_configs(3, 16, 4, scaled=True)
        model = models.BootstrapModel(cfg, seed=7)
        blob = codec.serialize_model(model.store)
        back = codec.deserialize_model(blob, cfg)
        assert np.array_equal(back.store.to_vector(), model.store.to_vector())

    def test_blob_smaller_than_raw_floats(self):
        # order-0 coding must not inflate the float bytes by more than the
        # 16-byte length prefix plus coder slack
        cfg, _ = models.select_configs(2, 64, 16, scaled=True)
        model = models.BootstrapModel(cfg, seed=1)
        blob = codec.serialize_model(model.store)
        raw = 4 * model.store.param_count()
        assert len(blob) < raw + 16 + 64

    def test_wrong_architecture_rejected(self):
        cfg_small, _ = models.select_configs(2, 16, 4, scaled=True)
        cfg_other, _ = models.select_configs(200, 16, 4, scaled=True)
        model = models.BootstrapModel(cfg_small, seed=0)
        blob = codec.serialize_model(model.store)
        with pytest.raises(CorruptArchive):
            codec.deserialize_model(blob, cfg_other)

    def test_blob_trailing_bytes_rejected(self):
        cfg, _ = models.select_configs(2, 16, 4, scaled=True)
        blob = codec.serialize_model(models.BootstrapModel(cfg, seed=0).store)
        with pytest.raises(CorruptArchive):
            codec.deserialize_model(blob + b"\x00", cfg)


class TestReportBpc:
    def test_whole_archive_accounting(self):
        data = b"mississippi" * 30
        arc = codec.compress(data, codec.ModeConfig(mode="combined"), seed=1)
        bpc, share = codec.report_bpc(arc)
        assert bpc == pytest.approx(8.0 * len(arc) / len(data))

    def test_share_splits_blob_and_payload(self):
        r = np.random.default_rng(17)
        data = bytes((r.random(1200) < 0.5).astype(np.uint8) + 48)
        arc = codec.compress(data, small_combined(), plan=FAST_PLAN, seed=2)
        header, blob, payload, bits = codec.parse_archive(arc)
        _, share = codec.report_bpc(arc)
        assert share == pytest.approx(8 * len(blob) / (8 * len(blob) + bits))
        assert 0.0 < share < 1.0

    def test_order0_share_zero(self):
        arc = codec.compress(b"tiny", seed=1)
        _, share = codec.report_bpc(arc)
        assert share == 0.0

    def test_empty_input_reports_zero(self):
        arc = codec.compress(b"", seed=1)
        bpc, share = codec.report_bpc(arc)
        assert bpc == 0.0 and share == 0.0


class TestModeConfig:
    def test_default_parts_per_mode(self):
        assert codec.ModeConfig(mode="bootstrap").resolved_parts() == 1024
        assert codec.ModeConfig(mode="combined").resolved_parts() == 64

    def test_validation(self):
        with pytest.raises(ValueError):
            codec.ModeConfig(mode="turbo")
        with pytest.raises(ValueError):
            codec.ModeConfig(update_interval=0)
        with pytest.raises(ValueError):
            codec.ModeConfig(context=30, stride=16)
        with pytest.raises(ValueError):
            codec.ModeConfig(parts=70000)

    def test_seed_range_checked(self):
        with pytest.raises(ValueError):
            codec.compress(b"abc", seed=-1)
        with pytest.raises(ValueError):
            codec.compress(b"abc", seed=1 << 64)


class TestMixedSizesProperty:
    def test_roundtrip_sweep(self):
        # fast paths only (order0 / warm-up / constant): broad but cheap
        r = np.random.default_rng(18)
        mode = codec.ModeConfig(mode="combined")
        for trial in range(25):
            n = int(r.integers(0, 2000))
            v = int(r.integers(1, 257))
            data = bytes(r.integers(0, v, n, dtype=np.uint8))
            arc, h1 = codec.compress_with_trace(data, mode, seed=trial)
            out, h2 = codec.decompress_with_trace(arc)
            assert out == data and h1 == h2
