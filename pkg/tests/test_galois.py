import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rapidraid import galois
from rapidraid.galois import GF8, GF16, FieldElement, FieldError, FieldSpec, field

import oracles

# products frozen from the shift-and-XOR oracle
KNOWN_GF8 = [(0x02, 0x80, 0x1D), (0x53, 0xCA, 0x8F), (0xFF, 0xFF, 0xE2), (0x8E, 0x02, 0x01)]
KNOWN_GF16 = [(0x0002, 0x8000, 0x100B), (0x1234, 0xABCD, 0x4792), (0xFFFF, 0xFFFF, 0x0733)]

gf8 = st.integers(0, 255)
gf16 = st.integers(0, 65535)


@pytest.mark.parametrize("a,b,expected", KNOWN_GF8)
def test_gf8_known_products(a, b, expected):
    assert field(GF8).mul(a, b) == expected


@pytest.mark.parametrize("a,b,expected", KNOWN_GF16)
def test_gf16_known_products(a, b, expected):
    assert field(GF16).mul(a, b) == expected


def test_inverse_of_two_in_gf8():
    assert field(GF8).inv(2) == 0x8E


def test_default_polynomials():
    assert GF8.reduction_polynomial == 0x11D
    assert GF16.reduction_polynomial == 0x1100B


def test_reducible_polynomial_rejected():
    with pytest.raises(FieldError):
        FieldSpec(8, 0x100)  # x^8 is reducible


def test_wrong_degree_rejected():
    with pytest.raises(FieldError):
        FieldSpec(8, 0x1100B)


def test_small_fields_for_analysis():
    assert field(FieldSpec(4)).mul(0x8, 0x2) == oracles.gf_mul(0x8, 0x2, 0x13)
    with pytest.raises(FieldError):
        FieldSpec(4).word_bytes


def test_zero_has_no_inverse():
    with pytest.raises(ZeroDivisionError):
        field(GF8).inv(0)
    with pytest.raises(ZeroDivisionError):
        field(GF16).div(5, 0)


@settings(max_examples=300)
@given(gf8, gf8, gf8)
def test_gf8_field_axioms(a, b, c):
    f = field(GF8)
    assert f.mul(a, b) == f.mul(b, a)
    assert f.mul(a, f.mul(b, c)) == f.mul(f.mul(a, b), c)
    assert f.mul(a, b ^ c) == f.mul(a, b) ^ f.mul(a, c)
    assert f.mul(a, 1) == a
    if a:
        assert f.mul(a, f.inv(a)) == 1


@settings(max_examples=300)
@given(gf16, gf16)
def test_gf16_matches_oracle(a, b):
    assert field(GF16).mul(a, b) == oracles.gf_mul(a, b, 0x1100B)
    if a:
        assert field(GF16).inv(a) == oracles.gf_inv(a, 0x1100B)


@given(gf16, st.integers(0, 70000))
def test_pow_matches_repeated_multiplication(a, e):
    assert field(GF16).pow(a, e) == oracles.gf_pow(a, e, 0x1100B)


@given(st.sampled_from([GF8, GF16]), st.integers(1, 65535), st.binary(min_size=0, max_size=64))
def test_mul_buffer_matches_word_loop(spec, coef, raw):
    coef %= spec.size
    wb = spec.word_bytes
    src = raw[: len(raw) - len(raw) % wb]
    acc = bytes(reversed(src))
    expected = oracles.mul_buffer(coef, src, acc, spec.reduction_polynomial)
    assert field(spec).mul_buffer(coef, src, acc) == expected


def test_mul_buffer_identities():
    f = field(GF16)
    buf = bytes(range(64))
    zero = bytes(64)
    assert f.mul_buffer(0, buf, zero) == zero
    assert f.mul_buffer(1, buf, zero) == buf
    # adding the same product twice cancels
    once = f.mul_buffer(0x1234, buf, zero)
    assert f.mul_buffer(0x1234, buf, once) == zero


def test_gf16_words_are_little_endian():
    f = field(GF16)
    out = f.mul_buffer(2, b"\x01\x00", b"\x00\x00")
    assert out == b"\x02\x00"


def test_mul_buffer_length_mismatch():
    with pytest.raises(FieldError):
        field(GF8).mul_buffer(3, b"abc", b"ab")
    with pytest.raises(FieldError):
        field(GF16).mul_buffer(3, b"abc", b"abc")


def test_mul_buffer_accepts_arrays():
    f = field(GF8)
    src = np.arange(16, dtype=np.uint8)
    out = f.mul_buffer(3, src, np.zeros(16, dtype=np.uint8))
    assert isinstance(out, np.ndarray)
    assert out.tobytes() == f.mul_buffer(3, src.tobytes(), bytes(16))


def test_field_elements():
    a = FieldElement(0x53)
    b = FieldElement(0xCA)
    assert int(a * b) == 0x8F
    assert (a * b) / b == a
    assert a + a == FieldElement(0)
    assert galois.mul(a, galois.inv(a)) == FieldElement(1)
    assert galois.add(a, b) == FieldElement(0x53 ^ 0xCA)


def test_field_element_type_errors():
    with pytest.raises(TypeError):
        FieldElement(3) * 3
    with pytest.raises(FieldError):
        FieldElement(3) * FieldElement(3, GF16)
    with pytest.raises(FieldError):
        FieldElement(256)


def test_module_mul_buffer_uses_element_field():
    c = FieldElement(0x1234, GF16)
    assert galois.mul_buffer(c, b"\x01\x00", b"\x00\x00") == field(GF16).mul_buffer(0x1234, b"\x01\x00", b"\x00\x00")
