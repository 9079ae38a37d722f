import csv
import io
import json

import numpy as np
import pytest

from coherence_dilution.cli import main
from coherence_dilution.core import DensityMatrix, dephasing_channel, maximally_coherent
from coherence_dilution.fileio import (
    FormatError,
    channel_from_json,
    channel_to_json,
    dumps,
    matrix_from_json,
    state_to_json,
)


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def _state(tmp_path, matrix, name="state.json"):
    return _write(tmp_path / name, state_to_json(DensityMatrix(np.asarray(matrix, dtype=complex))))


def _run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def _strip_time(text):
    obj = json.loads(text)
    obj.pop("timestamp", None)
    return obj


class TestMonotone:
    def test_psi4(self, tmp_path, capsys):
        f = _state(tmp_path, maximally_coherent(4).density().matrix)
        code, out, _ = _run(capsys, ["monotone", "--state", f])
        assert code == 0
        rep = json.loads(out)
        assert rep["seed"] == 0
        for name, v in rep["monotones"].items():
            assert v["value_bits"] == pytest.approx(2.0, abs=1e-6), name

    def test_incoherent(self, tmp_path, capsys):
        f = _state(tmp_path, np.diag([0.2, 0.3, 0.5]))
        code, out, _ = _run(capsys, ["monotone", "--state", f, "--epsilon", "0.1"])
        assert code == 0
        assert all(v["value_bits"] == 0.0 for v in json.loads(out)["monotones"].values())

    def test_ordering_and_determinism(self, tmp_path, capsys):
        f = _state(tmp_path, [[0.6, 0.2 + 0.1j], [0.2 - 0.1j, 0.4]])
        _, a, _ = _run(capsys, ["monotone", "--state", f, "--seed", "4"])
        _, b, _ = _run(capsys, ["monotone", "--state", f, "--seed", "4"])
        assert _strip_time(a) == _strip_time(b)
        m = json.loads(a)["monotones"]
        assert m["c_r"]["value_bits"] <= m["c_max"]["value_bits"] + 1e-6
        assert m["c_max"]["value_bits"] <= m["c_delta_max"]["value_bits"] + 1e-6
        assert json.loads(a)["seed"] == 4

    def test_out_file(self, tmp_path, capsys):
        f = _state(tmp_path, maximally_coherent(2).density().matrix)
        out = tmp_path / "r.json"
        assert _run(capsys, ["monotone", "--state", f, "--out", str(out)])[0] == 0
        assert json.loads(out.read_text())["command"] == "monotone"


class TestParseErrors:
    def test_missing_file(self, tmp_path, capsys):
        assert _run(capsys, ["monotone", "--state", str(tmp_path / "none.json")])[0] == 2

    def test_bad_json(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert _run(capsys, ["monotone", "--state", str(p)])[0] == 2

    def test_not_a_state(self, tmp_path, capsys, caplog):
        f = _write(tmp_path / "s.json", {"dim": 2, "matrix": [[1, 0], [0, 1]]})
        assert _run(capsys, ["monotone", "--state", f])[0] == 2
        assert "trace" in caplog.text

    def test_bad_epsilon(self, tmp_path, capsys):
        f = _state(tmp_path, np.eye(2) / 2)
        assert _run(capsys, ["dilute", "--state", f, "--class", "mio", "--epsilon", "1.5"])[0] == 2

    def test_missing_flag(self, tmp_path, capsys):
        f = _state(tmp_path, np.eye(2) / 2)
        assert _run(capsys, ["dilute", "--state", f])[0] == 2


class TestDilute:
    def test_psi2_mio(self, tmp_path, capsys):
        f = _state(tmp_path, maximally_coherent(2).density().matrix)
        proto = tmp_path / "p.json"
        code, out, _ = _run(capsys, ["dilute", "--state", f, "--class", "mio", "--out", str(proto)])
        assert code == 0
        summary = json.loads(out)
        assert summary["M"] == 2 and summary["certificate"]["verdict"] == "pass"
        saved = json.loads(proto.read_text())
        assert saved["metadata"]["M"] == 2
        assert saved["metadata"]["bounds"][0] == pytest.approx(1.0, abs=1e-6)
        ch = channel_from_json(saved)
        assert ch.in_dim == 2

    def test_qutrit_sio(self, tmp_path, capsys):
        psi = np.sqrt([0.5, 0.3, 0.2])
        f = _state(tmp_path, np.outer(psi, psi))
        code, out, _ = _run(capsys, ["dilute", "--state", f, "--class", "sio"])
        assert code == 0
        summary = json.loads(out)
        assert summary["M"] == 3
        assert "kraus" in summary["protocol"]

    def test_incoherent_dio(self, tmp_path, capsys):
        f = _state(tmp_path, np.diag([0.4, 0.6]))
        code, out, _ = _run(capsys, ["dilute", "--state", f, "--class", "dio"])
        assert code == 0 and json.loads(out)["M"] == 1

    def test_audit_failure_exit(self, tmp_path, capsys, monkeypatch):
        import coherence_dilution.cli as cli
        from coherence_dilution.verify import Certificate
        monkeypatch.setattr(cli, "audit_protocol",
                            lambda p, *a: Certificate("x", "protocol", False, 1e-8, {"kind": "forced"}))
        f = _state(tmp_path, maximally_coherent(2).density().matrix)
        assert _run(capsys, ["dilute", "--state", f, "--class", "mio"])[0] == 4

    def test_solver_failure_exit(self, tmp_path, capsys, monkeypatch, caplog):
        import coherence_dilution.cli as cli
        from coherence_dilution.sdp import SolverError

        def boom(*a, **k):
            raise SolverError("forced")
        monkeypatch.setattr(cli, "synthesize", boom)
        f = _state(tmp_path, maximally_coherent(2).density().matrix)
        assert _run(capsys, ["dilute", "--state", f, "--class", "mio"])[0] == 3
        assert "solver failure" in caplog.text


class TestSweep:
    def _rows(self, text):
        return list(csv.DictReader(io.StringIO(text)))

    def test_psi2_mio(self, tmp_path, capsys):
        f = _state(tmp_path, maximally_coherent(2).density().matrix)
        code, out, err = _run(capsys, ["sweep", "--state", f, "--class", "mio", "--nmax", "3"])
        assert code == 0
        rows = self._rows(out)
        assert [r["n"] for r in rows] == ["1", "2", "3"]
        assert all(float(r["cost_per_copy"]) == pytest.approx(1.0, abs=1e-6) for r in rows)
        assert json.loads(err)["seed"] == 0

    def test_io_trend(self, tmp_path, capsys):
        psi = np.sqrt([0.9, 0.1])
        f = _state(tmp_path, np.outer(psi, psi))
        out_csv = tmp_path / "s.csv"
        code, out, _ = _run(capsys, ["sweep", "--state", f, "--class", "io", "--nmax", "8",
                                     "--epsilon", "0.01", "--out", str(out_csv)])
        assert code == 0
        rows = self._rows(out_csv.read_text())
        assert len(rows) == 8
        assert float(rows[0]["asymptotic_reference"]) == pytest.approx(0.468995593589, abs=1e-11)
        assert json.loads(out)["csv_file"] == str(out_csv)

    def test_incoherent_zero(self, tmp_path, capsys):
        f = _state(tmp_path, np.diag([0.5, 0.5]))
        _, out, _ = _run(capsys, ["sweep", "--state", f, "--class", "sio", "--nmax", "4"])
        assert all(float(r["cost_per_copy"]) == 0.0 for r in self._rows(out))

    def test_cap_exit(self, tmp_path, capsys):
        f = _state(tmp_path, [[0.6, 0.2], [0.2, 0.4]])
        assert _run(capsys, ["sweep", "--state", f, "--class", "mio", "--nmax", "6"])[0] == 5

    def test_byte_identical_csv(self, tmp_path, capsys):
        f = _state(tmp_path, [[0.6, 0.2], [0.2, 0.4]])
        _, a, _ = _run(capsys, ["sweep", "--state", f, "--class", "dio", "--nmax", "2", "--epsilon", "0.05"])
        _, b, _ = _run(capsys, ["sweep", "--state", f, "--class", "dio", "--nmax", "2", "--epsilon", "0.05"])
        assert a == b


class TestVerify:
    def _channel(self, tmp_path, ch, name="ch.json"):
        return _write(tmp_path / name, channel_to_json(ch))

    def test_dephasing_sio(self, tmp_path, capsys):
        f = self._channel(tmp_path, dephasing_channel(3))
        code, out, _ = _run(capsys, ["verify", "--channel", f, "--class", "sio"])
        assert code == 0 and json.loads(out)["verdict"] == "pass"

    def test_constant_psi2_mio(self, tmp_path, capsys):
        psi = maximally_coherent(2).density().matrix
        choi = np.kron(np.eye(2), psi)
        f = _write(tmp_path / "c.json", {"choi": [[[x.real, x.imag] for x in row] for row in choi]})
        code, out, _ = _run(capsys, ["verify", "--channel", f, "--class", "mio"])
        assert code == 1
        rep = json.loads(out)
        assert rep["verdict"] == "fail"
        assert rep["membership"]["witness"]["kind"] == "basis_state"

    def test_protocol_file_mio(self, tmp_path, capsys):
        f = _state(tmp_path, [[0.7, 0.3j], [-0.3j, 0.3]])
        proto = tmp_path / "p.json"
        assert _run(capsys, ["dilute", "--state", f, "--class", "mio", "--out", str(proto)])[0] == 0
        assert _run(capsys, ["verify", "--channel", str(proto), "--class", "mio"])[0] == 0

    def test_choi_with_io_claim(self, tmp_path, capsys):
        choi = np.kron(np.eye(2), np.eye(2) / 2)
        f = _write(tmp_path / "c.json", {"in_dim": 2, "out_dim": 2, "choi": choi.real.tolist()})
        assert _run(capsys, ["verify", "--channel", f, "--class", "io"])[0] == 2


class TestFileFormats:
    def test_matrix_entries(self):
        m = matrix_from_json([[1, [0, 2]], [[0, -2], 3.5]])
        assert m[0, 1] == 2j and m[1, 1] == 3.5
        with pytest.raises(FormatError):
            matrix_from_json([[1, "x"]])
        with pytest.raises(FormatError):
            matrix_from_json([[1, 2], [3]])

    def test_channel_errors(self):
        with pytest.raises(FormatError):
            channel_from_json({"kraus": []})
        with pytest.raises(FormatError):
            channel_from_json({"foo": 1})
        with pytest.raises(FormatError):
            channel_from_json({"choi": [[1, 0, 0], [0, 1, 0], [0, 0, 1]]})

    def test_roundtrip(self):
        ch = dephasing_channel(2)
        back = channel_from_json(json.loads(json.dumps(channel_to_json(ch))))
        assert all(np.allclose(a, b) for a, b in zip(ch.kraus_ops, back.kraus_ops))

    def test_twelve_digits(self):
        assert json.loads(dumps({"x": 1 / 3})) == {"x": 0.333333333333}
