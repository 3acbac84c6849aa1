from __future__ import annotations

import math
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csamsim import (
    CsamMessage,
    DecodeError,
    FORMAT_VERSION,
    HEADER_BYTES,
    HistoryBlock,
    KnownRecord,
    KnownType,
    UnknownCube,
    UnknownRecord,
    WireFormat,
    baseline_message_size,
    decode,
    encode,
    expected_size,
    quantize_message,
)

FMT = WireFormat()

finite = st.floats(allow_nan=False, allow_infinity=False, width=64,
                   min_value=-1e12, max_value=1e12)
angles = st.floats(min_value=0.0, max_value=2.0 * math.pi, exclude_max=True)
obj_ids = st.integers(min_value=0, max_value=(1 << 24) - 1)


def known_records():
    return st.builds(
        KnownRecord, object_id=obj_ids, obj_type=st.sampled_from(KnownType),
        extent_x=finite, extent_y=finite, center_x=finite, center_y=finite,
        speed=finite, heading=finite, yaw=finite)


def history_blocks():
    entry = st.tuples(finite, finite, finite, angles, angles)
    return st.builds(HistoryBlock,
                     entries=st.tuples(entry, entry, entry, entry, entry))


@st.composite
def messages(draw):
    known = draw(st.lists(known_records(), max_size=4))
    history = draw(st.lists(history_blocks(), max_size=len(known)))
    resolution = draw(st.integers(min_value=1, max_value=5))
    cube = st.builds(UnknownCube, x=finite, y=finite, z=finite,
                     edge_m=st.floats(min_value=0.0, max_value=1e6))
    unknown = draw(st.lists(
        st.builds(UnknownRecord, object_id=obj_ids,
                  cubes=st.lists(cube, min_size=resolution,
                                 max_size=resolution).map(tuple)),
        max_size=3))
    return CsamMessage(
        sender_id=draw(obj_ids), sequence=draw(st.integers(0, 0xFFFFFF)),
        generation_time_s=draw(finite), self_record=draw(known_records()),
        known=tuple(known), history=tuple(history), unknown=tuple(unknown),
        resolution=resolution if unknown else draw(st.integers(0, 5)))


def simple_msg(**kw):
    self_rec = KnownRecord(7, KnownType.CAR, 4.8, 1.8, 100.0, 2.0, 20.0, 0.0, 0.0)
    defaults = dict(sender_id=7, sequence=1, generation_time_s=1.25,
                    self_record=self_rec)
    defaults.update(kw)
    return CsamMessage(**defaults)


class TestSizes:
    def test_self_only_frame_is_284(self):
        assert len(encode(simple_msg(), FMT)) == 284
        assert expected_size(0, 0, 0, 0, FMT) == 284

    def test_closed_form_accounting(self):
        rec = simple_msg().self_record
        hist = HistoryBlock(tuple((0.0, 0.0, 1.0, 0.0, 0.0) for _ in range(5)))
        cubes = tuple(UnknownCube(float(i), 0.0, 0.3, 0.6) for i in range(4))
        m = simple_msg(known=(rec, rec), history=(hist,),
                       unknown=(UnknownRecord(9, cubes),), resolution=4)
        want = HEADER_BYTES + 260 + 2 * 60 + 1 * 40 + 4 * 1 * 32
        assert expected_size(2, 1, 1, 4, FMT) == want
        assert len(encode(m, FMT)) == want

    @pytest.mark.parametrize("cars,size", [(0, 260), (62, 3980),
                                           (125, 7760), (250, 15260)])
    def test_baseline_size_model(self, cars, size):
        assert baseline_message_size(cars) == size

    def test_baseline_rejects_negative(self):
        with pytest.raises(ValueError):
            baseline_message_size(-1)


class TestRoundTrip:
    def test_simple_message_round_trips(self):
        m = simple_msg()
        assert decode(encode(m, FMT), FMT) == m

    def test_history_quantization_is_decode_grid(self):
        hist = HistoryBlock(tuple((10.3, -3.14, 17.237, 1.0, 6.0)
                                  for _ in range(5)))
        m = simple_msg(known=(simple_msg().self_record,), history=(hist,))
        out = decode(encode(m, FMT), FMT)
        assert out == quantize_message(m, FMT)
        got = out.history[0].entries[0]
        assert got[0] == pytest.approx(10.25)     # 0.25 m grid
        assert got[1] == pytest.approx(-3.25)
        assert got[2] == pytest.approx(17.24)     # 0.01 m/s grid

    def test_full_precision_history_when_entries_are_wide(self):
        fmt = WireFormat(l_h=200)
        assert fmt.history_full_precision
        hist = HistoryBlock(tuple((10.3, -3.14, 17.237, 1.0, 6.0)
                                  for _ in range(5)))
        m = simple_msg(known=(simple_msg().self_record,), history=(hist,))
        assert decode(encode(m, fmt), fmt) == m

    def test_trailing_padding_ignored(self):
        m = simple_msg()
        buf = encode(m, FMT) + b"\x00" * 500
        assert decode(buf, FMT) == m

    @settings(max_examples=300, deadline=None)
    @given(messages())
    def test_round_trip_law(self, m):
        buf = encode(m, FMT)
        assert len(buf) == expected_size(
            len(m.known), len(m.history), len(m.unknown),
            m.resolution if m.unknown else m.resolution, FMT)
        assert decode(buf, FMT) == quantize_message(m, FMT)

    @settings(max_examples=100, deadline=None)
    @given(messages(), st.integers(min_value=0, max_value=10_000))
    def test_decoder_never_over_reads(self, m, cut):
        buf = encode(m, FMT)
        if cut >= len(buf):
            return
        with pytest.raises(DecodeError):
            decode(buf[:cut], FMT)


class TestDecodeErrors:
    def test_truncated_header(self):
        with pytest.raises(DecodeError) as e:
            decode(b"\x00" * 10, FMT)
        assert e.value.offset == 0

    def test_bad_version_reports_offset_4(self):
        buf = bytearray(encode(simple_msg(), FMT))
        buf[7] = 9    # high byte of the sequence word carries the version
        with pytest.raises(DecodeError) as e:
            decode(bytes(buf), FMT)
        assert e.value.offset == 4
        assert "version" in str(e.value)

    def test_history_count_exceeding_known_reports_offset_18(self):
        buf = bytearray(encode(simple_msg(), FMT))
        struct.pack_into("<H", buf, 18, 3)
        with pytest.raises(DecodeError) as e:
            decode(bytes(buf), FMT)
        assert e.value.offset == 18

    def test_unknowns_without_resolution_report_offset_22(self):
        buf = bytearray(encode(simple_msg(), FMT))
        struct.pack_into("<H", buf, 20, 1)   # u_r = 1 while n stays 0
        with pytest.raises(DecodeError) as e:
            decode(bytes(buf), FMT)
        assert e.value.offset == 22

    def test_truncation_after_header_names_section(self):
        rec = simple_msg().self_record
        buf = encode(simple_msg(known=(rec,)), FMT)
        with pytest.raises(DecodeError, match="truncated"):
            decode(buf[:-1], FMT)

    def test_inconsistent_cube_ids_rejected(self):
        cubes = tuple(UnknownCube(float(i), 0.0, 0.3, 0.6) for i in range(2))
        m = simple_msg(unknown=(UnknownRecord(9, cubes),), resolution=2)
        buf = bytearray(encode(m, FMT))
        at = HEADER_BYTES + FMT.l_self + FMT.l_u   # second cube's id word
        struct.pack_into("<I", buf, at, 10)
        with pytest.raises(DecodeError, match="inconsistent"):
            decode(bytes(buf), FMT)


class TestEncodeValidation:
    def test_more_history_than_known_rejected(self):
        hist = HistoryBlock(tuple((0.0,) * 5 for _ in range(5)))
        with pytest.raises(ValueError, match="history"):
            encode(simple_msg(history=(hist,)), FMT)

    def test_unknowns_need_resolution(self):
        cubes = (UnknownCube(0, 0, 0, 1),)
        with pytest.raises(ValueError, match="resolution"):
            encode(simple_msg(unknown=(UnknownRecord(9, cubes),),
                              resolution=0), FMT)

    def test_cube_count_must_match_resolution(self):
        cubes = (UnknownCube(0, 0, 0, 1),)
        with pytest.raises(ValueError, match="cubes"):
            encode(simple_msg(unknown=(UnknownRecord(9, cubes),),
                              resolution=3), FMT)

    def test_history_block_arity_enforced(self):
        hist = HistoryBlock(((0.0, 0.0, 0.0, 0.0, 0.0),))
        rec = simple_msg().self_record
        with pytest.raises(ValueError, match="entries"):
            encode(simple_msg(known=(rec,), history=(hist,)), FMT)

    def test_object_id_range_enforced(self):
        bad = KnownRecord(1 << 24, KnownType.CAR, 1, 1, 0, 0, 0, 0, 0)
        with pytest.raises(ValueError, match="24-bit"):
            encode(simple_msg(self_record=bad), FMT)

    def test_sequence_range_enforced(self):
        with pytest.raises(ValueError, match="sequence"):
            encode(simple_msg(sequence=1 << 24), FMT)


class TestWireFormatValidation:
    def test_l_k_must_hold_core(self):
        with pytest.raises(ValueError):
            WireFormat(l_k=59)

    def test_l_h_must_divide_into_entries(self):
        with pytest.raises(ValueError):
            WireFormat(l_h=41)

    def test_history_entries_need_quantized_min(self):
        with pytest.raises(ValueError):
            WireFormat(l_h=35)

    def test_default_entry_is_8_bytes_quantized(self):
        assert FMT.history_entry_bytes == 8
        assert not FMT.history_full_precision
