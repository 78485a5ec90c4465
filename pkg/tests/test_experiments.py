import json
import math

import numpy as np
import pytest
from scipy import special, stats

from splitfsk.channel import NoiseModel, apply_channel
from splitfsk.cli import main
from splitfsk.errors import ConfigError, DomainError, FormatError
from splitfsk.experiments import (ExperimentConfig, Link, ResultRecord, _link_for, _unit_noise,
                                  curve_gap_db, decode_capture, equivalent_loss_db,
                                  esn0_for_ber, extrapolate_required_esn0,
                                  read_reference_bits, run_ber_sweep, run_efficiency_report,
                                  simulate_curve, wilson_interval)
from splitfsk.modem import (ModemConfig, coherent_demod, modulate, symbol_frame, theoretical_ber,
                            transmit, write_waveform)

QUICK = dict(rates=(100e3,), esn0_db=(4.0, 6.0), target_errors=20, max_bits=3000,
             block_samples=200_000)


def analytic_ber(link: Link, esn0_db: float, n_bits: int = 2000) -> float:
    """Exact mean error probability of the correlator in white noise added
    after the channel, averaged over a noiseless bit sequence."""
    bits = np.random.default_rng(5).integers(0, 2, n_bits)
    frame = symbol_frame(bits, link.tx)
    s = apply_channel(np.append(transmit(bits, link.tx), np.zeros(link.tx.N)),
                      link.channel, NoiseModel())
    res = coherent_demod(s, link.rx, frame, link.channel_phase, link.offset)
    margin = (np.where(bits == 1, 1.0, -1.0) * (res.corr_plus - res.corr_minus))[link.warmup:]
    # per-symbol std of the correlator difference from the actual references
    fs = link.tx.fs
    n = np.arange(link.tx.Ng, link.tx.N) + link.offset
    refs = [np.sin(frame.phases[:, None] + 2 * np.pi * f * n[None, :] / fs + psi)
            for f, psi in zip((link.rx.f_minus, link.rx.f_plus), link.channel_phase)]
    energy = np.sum((refs[1] - refs[0]) ** 2, axis=1)[link.warmup:]
    n0 = link.Es / 10 ** (esn0_db / 10)
    sample_var = n0 * fs / 2  # white noise with two-sided density n0/2
    sigma = np.sqrt(sample_var * energy) / fs
    return float(np.mean(special.erfc(margin / (math.sqrt(2) * sigma))) / 2)


class TestConfig:
    def test_defaults_and_hash(self):
        a = ExperimentConfig.load("reference")
        b = ExperimentConfig()
        assert a == b
        assert a.config_hash() == b.config_hash()
        assert len(a.config_hash()) == 64
        assert a.replace(seed=2).config_hash() != a.config_hash()

    def test_json_round_trip(self, tmp_path):
        cfg = ExperimentConfig(**QUICK, circuit={"RL": 20.0})
        path = tmp_path / "c.json"
        path.write_text(cfg.canonical_json())
        loaded = ExperimentConfig.load(str(path))
        assert loaded == cfg and loaded.config_hash() == cfg.config_hash()

    def test_scalar_sequences_coerced(self):
        assert ExperimentConfig(rates=50e3).rates == (50e3,)

    @pytest.mark.parametrize("bad", [
        {"k": 1.2}, {"k_tx": -0.1}, {"rates": [0.0]}, {"target_errors": 0},
        {"noise_side": "both"}, {"receiver": "magic"}, {"tones": "guess"},
        {"transition": "++"}, {"sigma1_share": 2.0}, {"esn0_db": [float("inf")]},
        {"kind": "PSK"}, {"guard": "half"}, {"guard": -1.0}, {"circuit": {"C1": -1.0}},
        {"circuit": {"Lx": 1.0}}, {"bogus": 1},
    ])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(bad)

    def test_unreadable(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.load(str(tmp_path / "missing.json"))
        bad = tmp_path / "bad.json"
        bad.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            ExperimentConfig.load(str(bad))

    def test_couplings(self):
        cfg = ExperimentConfig(k=0.4, k_tx=0.3)
        assert cfg.tx_coupling == 0.3 and cfg.rx_coupling == 0.3
        assert ExperimentConfig(k=0.4, k_rx=0.5).tx_coupling == 0.4


class TestStatistics:
    def test_wilson_against_formula(self):
        e, n, z = 30, 1000, stats.norm.ppf(0.975)
        p = e / n
        centre = (p + z * z / (2 * n)) / (1 + z * z / n)
        half = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
        lo, hi = wilson_interval(e, n)
        assert lo == pytest.approx(centre - half, rel=1e-9)
        assert hi == pytest.approx(centre + half, rel=1e-9)
        assert wilson_interval(0, 0) == (0.0, 1.0)

    def test_esn0_inverse(self):
        for db in (2.0, 8.0, 13.0):
            assert esn0_for_ber(theoretical_ber(db)) == pytest.approx(db, abs=1e-8)
        with pytest.raises(DomainError):
            esn0_for_ber(0.6)

    def test_loss(self):
        assert equivalent_loss_db(12.0, theoretical_ber(10.0)) == pytest.approx(2.0, abs=1e-8)
        assert math.isnan(equivalent_loss_db(5.0, 0.0))

    def test_extrapolation_recovers_shift(self):
        rows = [{"esn0_db": e, "bits": 10**7, "errors": int(theoretical_ber(e - 1.5) * 1e7),
                 "ber": theoretical_ber(e - 1.5)} for e in (6.0, 8.0, 10.0, 14.0)]
        rows[-1]["errors"], rows[-1]["ber"] = 0, 0.0
        est = extrapolate_required_esn0(rows)
        assert est["loss_db"] == pytest.approx(1.5, abs=0.01)
        assert est["esn0_db"] == pytest.approx(esn0_for_ber(1e-6) + 1.5, abs=0.01)
        assert est["error_free_points"] == 1
        assert math.isnan(extrapolate_required_esn0([])["esn0_db"])

    def test_curve_gap(self):
        a = [{"errors": 10, "ber": theoretical_ber(6.0)}]
        b = [{"errors": 10, "ber": theoretical_ber(6.4)}]
        assert curve_gap_db(a, b) == pytest.approx(0.4, abs=1e-8)
        assert math.isnan(curve_gap_db([{"errors": 0, "ber": 0.0}], b))


class TestLink:
    @pytest.fixture(scope="class")
    @classmethod
    def link(cls):
        return _link_for(ExperimentConfig(**QUICK), 100e3)

    def test_geometry(self, link):
        assert 0 <= link.offset < link.tx.N
        assert link.warmup == math.ceil(link.channel.L_h / link.tx.N) + 1
        assert link.Es > 0

    def test_noise_scale(self, link):
        unit = _unit_noise("sigma2")
        scale = link.noise_scale(7.0, unit)
        assert link.Es / (scale ** 2 * link.n0(unit)) == pytest.approx(10 ** 0.7)

    def test_mixed_noise_unit(self):
        nm = _unit_noise("mixed", 0.25)
        assert nm.sigma1 ** 2 + nm.sigma2 ** 2 == pytest.approx(1.0)

    def test_mismatched_timing_rejected(self, link):
        other = ModemConfig.for_rate(link.tx.f_minus, link.tx.f_plus, 50e3)
        with pytest.raises(DomainError):
            Link(link.p, link.tx, other)

    def test_monte_carlo_matches_analytic(self):
        cfg = ExperimentConfig(rates=(20e3,), target_errors=300, max_bits=200_000)
        link = _link_for(cfg, 20e3)
        row = simulate_curve(link, cfg, [8.0], _unit_noise("sigma2"))[0]
        p = analytic_ber(link, 8.0)
        assert stats.binomtest(row["errors"], row["bits"], p).pvalue > 1e-3

    def test_stopping_rule(self, link):
        cfg = ExperimentConfig(**{**QUICK, "target_errors": 5, "min_bits": 2000})
        rows = simulate_curve(link, cfg, [2.0, 30.0], _unit_noise("sigma2"))
        assert rows[0]["errors"] >= 5 and rows[0]["bits"] >= 2000
        assert rows[1]["errors"] == 0 and rows[1]["bits"] == cfg.max_bits


class TestRecords:
    def test_byte_identical(self, tmp_path):
        cfg = ExperimentConfig(**QUICK)
        a = run_ber_sweep(cfg)
        b = run_ber_sweep(cfg)
        assert a.csv_text() == b.csv_text()
        assert a.csv_text() != run_ber_sweep(cfg.replace(seed=9)).csv_text()
        csv_path, json_path = a.write(tmp_path)
        meta = json.loads(open(json_path).read())
        assert meta["config_hash"] == cfg.config_hash() and meta["seed"] == 1
        header = open(csv_path).readline().strip().split(",")
        assert header[:4] == ["rate", "kind", "receiver", "esn0_db"]

    def test_empty_record(self):
        assert ResultRecord("x", "h", 1, []).csv_text() == ""

    def test_noncoherent_and_quantized_paths(self):
        base = ExperimentConfig(**{**QUICK, "esn0_db": (8.0,), "max_bits": 1000})
        for changes in ({"quantize": True}, {"receiver": "noncoherent", "kind": "RFSK_BIPOLAR"}):
            rows = run_ber_sweep(base.replace(**changes)).rows
            assert rows[0]["bits"] > 0 and 0 <= rows[0]["ber"] < 0.5

    def test_efficiency_report(self):
        cfg = ExperimentConfig(efficiency_points=11, efficiency_k=(0.4,), windows=(10e-6,))
        rec = run_efficiency_report(cfg)
        assert len(rec.rows) == 11
        assert rec.meta["steady_phasor"]["eta_0"] == pytest.approx(0.911, abs=2e-3)
        tr = rec.meta["transient"][repr(10e-6)]
        assert tr["plus_to_minus"] < tr["minus_to_plus"]


class TestDecode:
    @pytest.fixture()
    def capture(self, tmp_path):
        cfg = ExperimentConfig(kind="RFSK_BIPOLAR")
        link = _link_for(cfg, 50e3)
        bits = np.random.default_rng(3).integers(0, 2, 120)
        y = apply_channel(transmit(bits, link.tx), link.channel, NoiseModel())
        path = tmp_path / "cap.bin"
        write_waveform(path, y, link.tx, fmt="int8")
        ref = tmp_path / "ref.txt"
        ref.write_text("".join(map(str, bits)) + "\n")
        return cfg, path, ref, bits

    def test_round_trip(self, capture):
        cfg, path, ref, bits = capture
        rep = decode_capture(path, cfg, read_reference_bits(ref))
        assert rep.errors == 0 and rep.ber == 0
        assert np.array_equal(rep.bits, bits)

    def test_reference_file_parsing(self, tmp_path):
        p = tmp_path / "r.txt"
        p.write_text("01 1\n0x")
        assert read_reference_bits(p).tolist() == [0, 1, 1, 0]

    def test_missing_header(self, tmp_path):
        p = tmp_path / "raw.bin"
        np.zeros(10, dtype="i1").tofile(p)
        with pytest.raises(FormatError):
            decode_capture(p, ExperimentConfig())

    def test_cli_decode(self, capture, tmp_path, capsys):
        cfg, path, ref, _ = capture
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(cfg.canonical_json())
        out = tmp_path / "out"
        code = main(["decode", "--config", str(cfg_path), "--capture", str(path),
                     "--reference", str(ref), "--out", str(out)])
        assert code == 0
        meta = json.loads((out / "decode.json").read_text())
        assert meta["errors"] == 0 and meta["symbols"] == 120


class TestCli:
    def test_analyze(self, tmp_path, capsys):
        assert main(["analyze", "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "analyze.json").read_text())
        assert report["peaks"]["split"] is True
        assert report["coefficients"]["a3"] == pytest.approx(2.52e-5)
        assert json.loads(capsys.readouterr().out)["peaks"]["split"] is True

    def test_ber_reproducible(self, tmp_path):
        cfg_path = tmp_path / "q.json"
        cfg_path.write_text(json.dumps({k: list(v) if isinstance(v, tuple) else v
                                        for k, v in QUICK.items()}))
        for d in ("a", "b"):
            assert main(["ber", "--config", str(cfg_path), "--seed", "4",
                         "--out", str(tmp_path / d)]) == 0
        assert (tmp_path / "a" / "ber.csv").read_bytes() == (tmp_path / "b" / "ber.csv").read_bytes()
        assert json.loads((tmp_path / "a" / "ber.json").read_text())["seed"] == 4

    def test_errors_are_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"k": 3}))
        assert main(["analyze", "--config", str(bad), "--out", str(tmp_path)]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ConfigError"

    def test_decode_without_capture(self, tmp_path, capsys):
        assert main(["decode", "--out", str(tmp_path)]) == 2
        assert "capture" in json.loads(capsys.readouterr().err)["message"]

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            main(["launch"])


def test_wilson_coverage_on_awgn():
    cfg = ModemConfig(1.0e6, 1.1e6, Tu=10e-6, Tg=1e-6, fs=20e6)
    esn0_db, n = 6.0, 3000
    truth = theoretical_ber(esn0_db)
    sigma = math.sqrt(cfg.Tu / 10 ** (esn0_db / 10) * cfg.fs / 2)
    covered = 0
    runs = 40
    for seed in range(runs):
        rng = np.random.default_rng(seed)
        bits = rng.integers(0, 2, n)
        frame = symbol_frame(bits, cfg)
        r = modulate(bits, cfg) + sigma * rng.standard_normal(n * cfg.N)
        errors = int(np.sum(coherent_demod(r, cfg, frame).bits != bits))
        lo, hi = wilson_interval(errors, n)
        covered += lo <= truth <= hi
    assert covered >= 0.9 * runs
