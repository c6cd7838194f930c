import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpan import imgen, simulate


def random_bytes(seed, n=imgen.RESPONSE_BYTES):
    return np.random.default_rng(seed).integers(0, 256, n, dtype=np.uint8).tobytes()


class TestParseHex:
    def test_example_line(self):
        text = "FFFA3F6C\n" + "00000000\n" * 10999
        data = imgen.parse_hex_response(text)
        assert list(data[:4]) == [255, 250, 63, 108]
        assert len(data) == 44000

    def test_all_zero_line(self):
        data = imgen.parse_hex_response("00000000\n" * 11000)
        assert data == bytes(44000)

    def test_invalid_hex_reports_position(self):
        text = "00000000\nGG000000\n" + "00000000\n" * 10998
        with pytest.raises(imgen.HexFormatError, match="line 2, column 1"):
            imgen.parse_hex_response(text)

    def test_wrong_line_length(self):
        with pytest.raises(imgen.HexFormatError, match="8 hex characters"):
            imgen.parse_hex_response("FFFA3F\n" + "00000000\n" * 11000)

    def test_short_file(self):
        with pytest.raises(imgen.HexFormatError, match="44000"):
            imgen.parse_hex_response("00000000\n" * 10999)

    def test_mixed_case_accepted(self):
        data = imgen.parse_hex_response("fffa3f6c\n" + "00000000\n" * 10999)
        assert list(data[:4]) == [255, 250, 63, 108]

    def test_surplus_truncated_with_warning(self):
        with pytest.warns(UserWarning, match="surplus"):
            data = imgen.parse_hex_response("00000000\n" * 11001)
        assert len(data) == 44000

    def test_format_round_trip(self):
        data = random_bytes(3)
        assert imgen.parse_hex_response(imgen.format_hex_response(data)) == data


class TestImgen:
    def test_all_ff_is_white(self):
        p = imgen.imgen(b"\xff" * 44000)
        assert (p.pixels == 255).all()
        assert p.pixels.shape == (200, 220)

    def test_identity_mapping(self):
        data = random_bytes(1)
        p = imgen.imgen(data)
        assert p.to_bytes() == data
        # row-major fill: pixel[r][c] = byte[r*220 + c]
        assert p.pixels[3, 17] == data[3 * 220 + 17]

    def test_wrong_length(self):
        with pytest.raises(ValueError, match="44000"):
            imgen.imgen(b"\x00" * 100)


class TestPgm:
    def test_round_trip(self):
        p = imgen.imgen(random_bytes(2))
        q = imgen.from_pgm(imgen.to_pgm(p))
        assert (q.pixels == p.pixels).all()

    def test_single_space_header_parses(self):
        data = random_bytes(4)
        q = imgen.from_pgm(b"P5 220 200 255 " + data)
        assert q.to_bytes() == data

    def test_comment_in_header(self):
        data = random_bytes(5)
        q = imgen.from_pgm(b"P5\n# a comment\n220 200\n255\n" + data)
        assert q.to_bytes() == data

    def test_wrong_dimensions(self):
        with pytest.raises(imgen.PgmFormatError, match="100x200"):
            imgen.from_pgm(b"P5\n100 200\n255\n" + bytes(20000))

    def test_wrong_maxval(self):
        with pytest.raises(imgen.PgmFormatError, match="maxval"):
            imgen.from_pgm(b"P5\n220 200\n65535\n" + bytes(88000))

    def test_bad_magic(self):
        with pytest.raises(imgen.PgmFormatError, match="magic"):
            imgen.from_pgm(b"P6\n220 200\n255\n" + bytes(132000))

    def test_truncated_raster(self):
        with pytest.raises(imgen.PgmFormatError, match="raster"):
            imgen.from_pgm(b"P5\n220 200\n255\n" + bytes(100))

    def test_file_round_trip(self, tmp_path):
        p = imgen.imgen(random_bytes(6), label="Alpha")
        imgen.write_pgm(tmp_path / "x.pgm", p)
        q = imgen.read_pgm(tmp_path / "x.pgm", label="Alpha")
        assert q.to_bytes() == p.to_bytes()
        assert q.label == "Alpha"


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_full_round_trip_bit_exact(seed):
    """hex text -> bytes -> image -> PGM -> image -> bytes."""
    data = random_bytes(seed)
    text = imgen.format_hex_response(data)
    p = imgen.imgen(imgen.parse_hex_response(text))
    q = imgen.from_pgm(imgen.to_pgm(p))
    assert q.to_bytes() == data


class TestSimilarity:
    def test_identical(self):
        p = imgen.imgen(random_bytes(7))
        assert imgen.image_similarity(p, p) == 1.0

    def test_one_pixel_flipped_all_bits(self):
        data = bytearray(random_bytes(8))
        data[100] = 0x00
        p = imgen.imgen(bytes(data))
        data[100] = 0xFF
        q = imgen.imgen(bytes(data))
        assert imgen.image_similarity(p, q) == 1.0 - 8 / 352000

    def test_complement(self):
        data = random_bytes(9)
        p = imgen.imgen(data)
        q = imgen.imgen(bytes(b ^ 0xFF for b in data))
        assert imgen.image_similarity(p, q) == 0.0

    def test_symmetry(self):
        a = imgen.imgen(random_bytes(10))
        b = imgen.imgen(random_bytes(11))
        assert imgen.image_similarity(a, b) == imgen.image_similarity(b, a)

    def test_measured_pair_matches_calibration(self):
        # similarity of a repeated ideal-env measurement ~ 0.9405
        fp = simulate.new_fingerprint(5, "Alpha")
        sims = []
        for k in range(10):
            a = simulate.measure(fp, simulate.ChallengePattern.P_FF, simulate.ENV_IDEAL, 2 * k)
            b = simulate.measure(fp, simulate.ChallengePattern.P_FF, simulate.ENV_IDEAL, 2 * k + 1)
            sims.append(
                imgen.image_similarity(
                    simulate.response_to_phenotype(a), simulate.response_to_phenotype(b)
                )
            )
        assert abs(np.mean(sims) - 0.9405) < 0.01

    def test_matches_pairwise_disagreement(self):
        fp = simulate.new_fingerprint(6, "Beta")
        a = simulate.measure(fp, simulate.ChallengePattern.P_55, simulate.ENV_EXTREME, 1)
        b = simulate.measure(fp, simulate.ChallengePattern.P_55, simulate.ENV_EXTREME, 2)
        sim = imgen.image_similarity(
            simulate.response_to_phenotype(a), simulate.response_to_phenotype(b)
        )
        assert sim == pytest.approx(1.0 - simulate.pairwise_disagreement(a, b), abs=1e-12)
