import hashlib
import struct

import numpy as np
import pytest

from enscascade.grid import Grid3, ScalarField, VectorField3
from enscascade.snapshot import FieldKind, SnapshotFormatError, decode, encode, read_snapshot, write_snapshot


@pytest.fixture
def field():
    g = Grid3(8, 1.5)
    return VectorField3(g, np.random.default_rng(0).standard_normal((3,) + g.shape))


class TestSnapshot:
    def test_roundtrip(self, tmp_path, field):
        digest = write_snapshot(tmp_path / "a.ensc", field, 0.25)
        s = read_snapshot(tmp_path / "a.ensc")
        assert s.grid == field.grid and s.time == 0.25 and s.kind is FieldKind.VORTICITY
        assert np.array_equal(s.field.values, field.values)
        assert digest == hashlib.sha256((tmp_path / "a.ensc").read_bytes()).hexdigest()

    def test_header_and_x_fastest_layout(self, field):
        blob = encode(field, 1.0, FieldKind.VELOCITY)
        magic, n, L, t, kind = struct.unpack_from("<5sIddI", blob)
        assert (magic, n, L, t, kind) == (b"ENSC1", 8, 1.5, 1.0, 0)
        body = np.frombuffer(blob, dtype="<f8", offset=struct.calcsize("<5sIddI"))
        assert body.size == 3 * 8**3
        assert body[1] == field.values[0, 1, 0, 0]
        assert body[8] == field.values[0, 0, 1, 0]
        assert body[8**3] == field.values[1, 0, 0, 0]

    def test_scalar_slot(self, tmp_path):
        g = Grid3(8)
        s = ScalarField(g, np.arange(512.0).reshape(g.shape))
        write_snapshot(tmp_path / "s.ensc", s, 0.0, FieldKind.SCALAR)
        back = read_snapshot(tmp_path / "s.ensc").field
        assert isinstance(back, ScalarField) and np.array_equal(back.values, s.values)

    def test_bad_magic(self, field):
        blob = bytearray(encode(field, 0.0, FieldKind.VORTICITY))
        blob[0:5] = b"XXXXX"
        with pytest.raises(SnapshotFormatError, match="magic"):
            decode(bytes(blob))

    def test_truncated(self, field):
        blob = encode(field, 0.0, FieldKind.VORTICITY)
        with pytest.raises(SnapshotFormatError):
            decode(blob[:-8])
        with pytest.raises(SnapshotFormatError):
            decode(blob[:10])
