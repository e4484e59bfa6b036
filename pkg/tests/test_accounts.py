"""
Tests for key derivation, addresses and EIP-55 checksums
"""

import numpy as np
import pytest

from lookalike.core.accounts import (
    Account,
    Address,
    ChecksumStatus,
    PrivateKey,
    SeededEntropy,
    SECP256K1_ORDER,
    derive_address,
    eip55_encode,
    eip55_verify,
    generate_account,
    keccak256,
    normalize_address,
    spawn_entropy,
)

from conftest import KEY_ONE_ADDRESS, KEY_ONE_CHECKSUM, KEY_THREE_CHECKSUM, KEY_TWO_CHECKSUM

CHECKSUM_VECTORS = [
    "0x5aAeb6053F3E94C9b9A09f33669435E7Ef1BeAed",
    "0xfB6916095ca1df60bB79Ce92cE3Ea74c37c5d359",
    "0xdbF03B407c01E7cD3CBea99509d93f8DDDC8C6FB",
    "0xD1220A0cf47c7B9Be7A2E6BA89F429762e7b9aDb",
    "0x52908400098527886E0F7030069857D2E4169EE7",
    "0x8617E340B3D01FA5F11F306F4090FD50E238070D",
    "0xde709f2102306220921060314715629080e2fb77",
    "0x27b1fdb04752bbc536007a920d24acb045561c26",
]


class TestKeccak:
    """Test the hash primitive"""

    def test_empty_input(self):
        """Keccak-256 of the empty string is the pre-standard value, not SHA3-256"""
        assert keccak256(b"").hex() == "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"


class TestDerivation:
    """Test private key to address derivation"""

    def test_key_one(self):
        """Scalar 1 derives the generator point's address"""
        address = derive_address(PrivateKey(1))
        assert address.value == KEY_ONE_ADDRESS
        assert address.checksummed() == KEY_ONE_CHECKSUM

    @pytest.mark.parametrize("scalar,expected", [(2, KEY_TWO_CHECKSUM), (3, KEY_THREE_CHECKSUM)])
    def test_small_scalars(self, scalar, expected):
        """Further fixture keys match their reference addresses"""
        assert eip55_encode(derive_address(PrivateKey(scalar))) == expected

    @pytest.mark.parametrize("scalar", [0, SECP256K1_ORDER, SECP256K1_ORDER + 1, -1])
    def test_scalar_out_of_range(self, scalar):
        """Scalars outside [1, n) are rejected"""
        with pytest.raises(ValueError):
            PrivateKey(scalar)

    def test_from_hex(self):
        """Hex keys parse with or without prefix"""
        assert PrivateKey.from_hex("0x" + "0" * 63 + "1") == PrivateKey(1)
        assert PrivateKey.from_hex("0" * 63 + "2").scalar == 2
        with pytest.raises(ValueError):
            PrivateKey.from_hex("abc")

    def test_derivation_is_deterministic(self):
        """Deriving twice gives the same address"""
        key = PrivateKey(0xDEADBEEF)
        assert derive_address(key) == derive_address(key)


class TestGeneration:
    """Test random account generation"""

    def test_seeded_generation_reproducible(self):
        """The same seed yields the same accounts"""
        first = [generate_account(SeededEntropy(7)) for _ in range(1)]
        second = [generate_account(SeededEntropy(7)) for _ in range(1)]
        assert first == second

    def test_generated_accounts_are_consistent(self):
        """Every generated address derives from its key"""
        source = SeededEntropy(99)
        for _ in range(20):
            account = generate_account(source)
            assert derive_address(account.key) == account.address

    def test_rejects_out_of_range_draws(self):
        """All-ones and all-zero draws are re-drawn"""

        class Scripted:
            def __init__(self):
                self.values = [b"\x00" * 32, b"\xff" * 32, (5).to_bytes(32, "big")]

            def read32(self):
                return self.values.pop(0)

        assert generate_account(Scripted()).key.scalar == 5

    def test_spawned_streams_are_independent(self):
        """Per-worker streams differ from one another and are reproducible"""
        a = [s.read32() for s in spawn_entropy(5, 4)]
        b = [s.read32() for s in spawn_entropy(5, 4)]
        assert a == b
        assert len(set(a)) == 4

    def test_unseeded_streams(self):
        """No seed means operating-system entropy"""
        streams = spawn_entropy(None, 2)
        assert len(streams[0].read32()) == 32


class TestRecords:
    """Test the 104-octet stored record"""

    def test_record_layout(self):
        """Address hex then key hex, all lowercase ASCII"""
        account = Account.from_key(PrivateKey(1))
        record = account.to_record()
        assert len(record) == 104
        assert record[:40].decode() == KEY_ONE_ADDRESS
        assert record[40:].decode() == "0" * 63 + "1"
        assert Account.from_record(record, verify=True) == account

    def test_rejects_malformed_records(self):
        """Wrong length, uppercase and non-hex records are errors"""
        record = Account.from_key(PrivateKey(1)).to_record()
        with pytest.raises(ValueError):
            Account.from_record(record[:-1])
        with pytest.raises(ValueError):
            Account.from_record(record.upper())
        with pytest.raises(ValueError):
            Account.from_record(b"z" * 104)

    def test_verify_detects_mismatch(self):
        """verify=True re-derives the address from the key"""
        record = bytearray(Account.from_key(PrivateKey(1)).to_record())
        record[40:] = ("0" * 63 + "2").encode()
        Account.from_record(bytes(record))
        with pytest.raises(ValueError):
            Account.from_record(bytes(record), verify=True)


class TestAddresses:
    """Test address parsing"""

    def test_normalize(self):
        """Any case, with or without 0x, normalizes to lowercase hex"""
        assert normalize_address(KEY_ONE_CHECKSUM).value == KEY_ONE_ADDRESS
        assert normalize_address(KEY_ONE_ADDRESS.upper()).value == KEY_ONE_ADDRESS
        address = Address(KEY_ONE_ADDRESS)
        assert normalize_address(address) is address

    @pytest.mark.parametrize("text", ["0x1234", "g" * 40, "0x" + "a" * 41, ""])
    def test_normalize_rejects_bad_text(self, text):
        """Wrong length or non-hex text is refused"""
        with pytest.raises(ValueError):
            normalize_address(text)

    def test_bytes_round_trip(self):
        """Twenty raw octets map back to the same address"""
        address = Address(KEY_ONE_ADDRESS)
        assert Address.from_bytes(address.to_bytes()) == address


class TestEip55:
    """Test checksum encoding and verification"""

    @pytest.mark.parametrize("vector", CHECKSUM_VECTORS)
    def test_reference_vectors(self, vector):
        """Reference addresses encode to themselves and verify as VALID"""
        assert eip55_encode(vector.lower()) == vector
        assert eip55_verify(vector) is ChecksumStatus.VALID

    def test_single_case_is_neutral(self):
        """Lowercase or uppercase text that is not the checksum form is neutral"""
        assert eip55_verify(KEY_ONE_CHECKSUM.lower()) is ChecksumStatus.NEUTRAL
        assert eip55_verify("0x" + KEY_ONE_ADDRESS.upper()) is ChecksumStatus.NEUTRAL
        assert not eip55_verify(KEY_ONE_CHECKSUM.lower())

    def test_single_flip_is_invalid(self):
        """Flipping the case of any one letter of a checksummed address fails"""
        body = KEY_ONE_CHECKSUM[2:]
        letters = [i for i, ch in enumerate(body) if ch.isalpha()]
        assert letters
        for i in letters:
            flipped = body[:i] + body[i].swapcase() + body[i + 1:]
            assert eip55_verify("0x" + flipped) is ChecksumStatus.INVALID

    @pytest.mark.parametrize("text", [None, 42, "7E5F4552091A69125d5DfCb7b8C2659029395Bdf", "0x123", "0x" + "g" * 40])
    def test_malformed_input_never_raises(self, text):
        """Anything that is not 0x plus 40 hex digits verifies as INVALID"""
        assert eip55_verify(text) is ChecksumStatus.INVALID

    def test_round_trip_on_random_addresses(self):
        """encode then verify is VALID, and lowercasing the encoding is the identity"""
        rng = np.random.default_rng(2024)
        for _ in range(10_000):
            lower = rng.bytes(20).hex()
            encoded = eip55_encode(lower)
            assert encoded[2:].lower() == lower
            assert eip55_verify(encoded)
